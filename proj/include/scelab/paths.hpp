#pragma once

// Discretized Brownian paths on a uniform grid, with the two path
// transformations the analysis needs: Cameron-Martin shifts along
// 1_[0, a0] and Ornstein-Uhlenbeck mixing of two independent paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "scelab/errors.hpp"
#include "scelab/philox.hpp"

namespace scelab {

/// Uniform grid t_k = k T / n on [0, T].
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw InvalidArgument("time grid requires T > 0");
    if (steps < 1) throw InvalidArgument("time grid requires n_steps >= 1");
  }

  double horizon() const noexcept { return horizon_; }
  int steps() const noexcept { return steps_; }
  double step() const noexcept { return horizon_ / steps_; }
  double time(int k) const noexcept {
    return k == steps_ ? horizon_ : horizon_ * static_cast<double>(k) / steps_;
  }

  /// Index of the node nearest to t (clamped to the grid).
  int nearest(double t) const noexcept {
    const double r = std::round(t / horizon_ * steps_);
    if (r <= 0.0) return 0;
    if (r >= steps_) return steps_;
    return static_cast<int>(r);
  }
  bool on_grid(double t) const noexcept {
    return t >= -1e-12 * horizon_ && t <= horizon_ * (1.0 + 1e-12) &&
           std::abs(time(nearest(t)) - t) <= 1e-9 * step();
  }
  /// Index of t, which must be a node.
  int node(double t) const {
    if (!on_grid(t))
      throw InvalidArgument("time " + std::to_string(t) +
                            " is not a node of the simulation grid");
    return nearest(t);
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.horizon_ == b.horizon_ && a.steps_ == b.steps_;
  }

 private:
  double horizon_ = 1.0;
  int steps_ = 1;
};

/// Immutable Brownian path: increments dB_k = B(t_{k+1}) - B(t_k).
class BrownianPath {
 public:
  BrownianPath(TimeGrid grid, std::vector<double> increments)
      : grid_(grid), increments_(std::move(increments)) {
    if (increments_.size() != static_cast<std::size_t>(grid_.steps()))
      throw InvalidArgument("increment count must equal n_steps");
    values_.assign(increments_.size() + 1, 0.0);
    for (std::size_t k = 0; k < increments_.size(); ++k)
      values_[k + 1] = values_[k] + increments_[k];
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const std::vector<double>& increments() const noexcept { return increments_; }
  double increment(int k) const { return increments_[static_cast<std::size_t>(k)]; }
  /// B(t_k); B(t_0) = 0.
  double value(int k) const { return values_[static_cast<std::size_t>(k)]; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Same path on the grid with n_steps / factor steps: coarse increments
  /// are sums of consecutive fine ones.
  BrownianPath coarsened(int factor) const {
    if (factor < 1 || grid_.steps() % factor != 0)
      throw InvalidArgument("coarsening factor must divide n_steps");
    std::vector<double> coarse(static_cast<std::size_t>(grid_.steps() / factor));
    for (std::size_t j = 0; j < coarse.size(); ++j) {
      double s = 0.0;
      for (int i = 0; i < factor; ++i)
        s += increments_[j * static_cast<std::size_t>(factor) + i];
      coarse[j] = s;
    }
    return BrownianPath(TimeGrid(grid_.horizon(), grid_.steps() / factor),
                        std::move(coarse));
  }

 private:
  TimeGrid grid_;
  std::vector<double> increments_;
  std::vector<double> values_;
};

/// Standard normal number `k` of stream (seed, index). Two normals come out
/// of each Philox block through Box-Muller, so draws are addressable
/// without generating their predecessors.
inline std::pair<double, double> normal_pair(std::uint64_t seed,
                                             std::uint64_t index,
                                             std::uint64_t block) {
  const philox::Key key{static_cast<std::uint32_t>(seed),
                        static_cast<std::uint32_t>(seed >> 32)};
  const philox::Counter ctr{static_cast<std::uint32_t>(block),
                            static_cast<std::uint32_t>(block >> 32),
                            static_cast<std::uint32_t>(index),
                            static_cast<std::uint32_t>(index >> 32)};
  const philox::Counter out = philox::philox4x32_10(ctr, key);
  const double u1 = philox::to_unit_open_closed(out[0], out[1]);
  const double u2 = philox::to_unit_open_closed(out[2], out[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Path number `index` of stream `seed`; a pure function of its arguments.
inline BrownianPath sample_path(const TimeGrid& grid, std::uint64_t seed,
                                std::uint64_t index) {
  const auto n = static_cast<std::size_t>(grid.steps());
  const double scale = std::sqrt(grid.step());
  std::vector<double> inc(n);
  for (std::size_t k = 0; k < n; k += 2) {
    const auto [z0, z1] = normal_pair(seed, index, k / 2);
    inc[k] = scale * z0;
    if (k + 1 < n) inc[k + 1] = scale * z1;
  }
  return BrownianPath(grid, std::move(inc));
}

/// Cameron-Martin perturbation B(t) -> B(t) + epsilon * min(t, alpha0).
struct ShiftDirection {
  double alpha0 = 1.0;
  double epsilon = 0.0;
};

struct ShiftedPath {
  BrownianPath path;
  double alpha0_used;   // grid time the shift was applied at
  bool snapped = false; // alpha0 was not a node and was moved to the nearest
};

inline ShiftedPath shift_path(const BrownianPath& path, const ShiftDirection& dir) {
  const TimeGrid& g = path.grid();
  if (!(dir.alpha0 > 0.0 && dir.alpha0 <= g.horizon() * (1.0 + 1e-12)))
    throw InvalidArgument("shift direction requires 0 < alpha0 <= T");
  const bool snapped = !g.on_grid(dir.alpha0);
  const int k0 = std::max(1, g.nearest(dir.alpha0));
  std::vector<double> inc = path.increments();
  const double bump = dir.epsilon * g.step();
  for (int k = 0; k < k0; ++k) inc[static_cast<std::size_t>(k)] += bump;
  return {BrownianPath(g, std::move(inc)), g.time(k0), snapped};
}

/// Incrementwise exp(-theta) w + sqrt(1 - exp(-2 theta)) w'.
inline BrownianPath mix_paths(const BrownianPath& omega,
                              const BrownianPath& omega_prime, double theta) {
  if (!(omega.grid() == omega_prime.grid()))
    throw GridMismatch("mix_paths requires both paths on the same grid");
  if (!(theta >= 0.0)) throw InvalidArgument("mixing parameter theta must be >= 0");
  const double a = std::exp(-theta);
  const double b = std::sqrt(-std::expm1(-2.0 * theta));
  const auto& w = omega.increments();
  const auto& wp = omega_prime.increments();
  std::vector<double> inc(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) inc[k] = a * w[k] + b * wp[k];
  return BrownianPath(omega.grid(), std::move(inc));
}

/// Debug dump with header "k,t,B".
inline void write_path_csv(std::ostream& os, const BrownianPath& path) {
  const auto old = os.precision(17);
  os << "k,t,B\n";
  for (int k = 0; k <= path.grid().steps(); ++k)
    os << k << ',' << path.grid().time(k) << ',' << path.value(k) << '\n';
  os.precision(old);
}

}  // namespace scelab
