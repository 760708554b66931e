#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace scelab::quad {

/// Composite trapezoid rule on uniformly spaced samples.
inline double trapezoid(std::span<const double> f, double h) {
  if (f.size() < 2) return 0.0;
  double interior = 0.0;
  for (std::size_t i = 1; i + 1 < f.size(); ++i) interior += f[i];
  return h * (0.5 * (f.front() + f.back()) + interior);
}

/// out[k] = trapezoid of f[0..k]; out[0] = 0. Differences out[j] - out[i]
/// equal the trapezoid over [i, j] up to rounding.
inline std::vector<double> cumulative_trapezoid(std::span<const double> f,
                                                double h) {
  std::vector<double> out(f.size(), 0.0);
  for (std::size_t k = 1; k < f.size(); ++k)
    out[k] = out[k - 1] + 0.5 * h * (f[k - 1] + f[k]);
  return out;
}

}  // namespace scelab::quad
