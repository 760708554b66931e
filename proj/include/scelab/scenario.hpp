#pragma once

// Coefficient families for the 1-d continuity equation
//   du + d/dx((b(t,x) + dB/dt) u) = 0,   u(0, .) = u0,
// their exact spatial derivatives, hypothesis scans on a window and the
// closed-form bound constants built from window sup norms.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scelab/errors.hpp"

namespace scelab {

enum class DriftKind { zero, linear, quadratic, logcosh, polynomial };

/// Autonomous drift b(x). Builtins:
///   zero        b = 0
///   linear      b = -rate * x + offset
///   quadratic   b = -curvature * x^2 / 2
///   logcosh     b = -curvature * log cosh x
///   polynomial  b = sum_i coefficients[i] * x^i
struct DriftSpec {
  DriftKind kind = DriftKind::zero;
  double rate = 0.0;
  double offset = 0.0;
  double curvature = 0.0;
  std::vector<double> coefficients;

  static DriftSpec zero() { return {}; }
  static DriftSpec linear(double a, double c = 0.0) {
    DriftSpec d;
    d.kind = DriftKind::linear;
    d.rate = a;
    d.offset = c;
    return d;
  }
  static DriftSpec quadratic(double kappa) {
    DriftSpec d;
    d.kind = DriftKind::quadratic;
    d.curvature = kappa;
    return d;
  }
  static DriftSpec logcosh(double kappa) {
    DriftSpec d;
    d.kind = DriftKind::logcosh;
    d.curvature = kappa;
    return d;
  }
  static DriftSpec polynomial(std::vector<double> coeffs) {
    DriftSpec d;
    d.kind = DriftKind::polynomial;
    d.coefficients = std::move(coeffs);
    return d;
  }

  static constexpr int max_order = 3;
};

enum class InitialKind { arctan_shift, exponential, affine };

/// Initial profile u0(x). Builtins:
///   arctan_shift  u0 = pi/2 + atan(x) + delta
///   exponential   u0 = exp(x)
///   affine        u0 = slope * x + intercept
struct InitialConditionSpec {
  InitialKind kind = InitialKind::arctan_shift;
  double delta = 0.1;
  double slope = 1.0;
  double intercept = 0.0;

  static InitialConditionSpec arctan_shift(double delta) {
    InitialConditionSpec s;
    s.kind = InitialKind::arctan_shift;
    s.delta = delta;
    return s;
  }
  static InitialConditionSpec exponential() {
    InitialConditionSpec s;
    s.kind = InitialKind::exponential;
    return s;
  }
  static InitialConditionSpec affine(double slope, double intercept) {
    InitialConditionSpec s;
    s.kind = InitialKind::affine;
    s.slope = slope;
    s.intercept = intercept;
    return s;
  }

  static constexpr int max_order = 2;
};

inline std::string to_string(DriftKind kind) {
  switch (kind) {
    case DriftKind::zero: return "zero";
    case DriftKind::linear: return "linear";
    case DriftKind::quadratic: return "quadratic";
    case DriftKind::logcosh: return "logcosh";
    case DriftKind::polynomial: return "polynomial";
  }
  return "unknown";
}

inline std::string to_string(InitialKind kind) {
  switch (kind) {
    case InitialKind::arctan_shift: return "arctan_shift";
    case InitialKind::exponential: return "exponential";
    case InitialKind::affine: return "affine";
  }
  return "unknown";
}

namespace detail {

inline double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

inline double polynomial_derivative(const std::vector<double>& c, double x,
                                    int order) {
  // Horner on the order-th derivative's coefficients.
  double acc = 0.0;
  for (std::size_t i = c.size(); i-- > static_cast<std::size_t>(order);) {
    double falling = 1.0;
    for (int j = 0; j < order; ++j) falling *= static_cast<double>(i - j);
    acc = acc * x + falling * c[i];
  }
  return acc;
}

}  // namespace detail

/// n-th spatial derivative of b at (t, x), n in 0..3. Builtins are
/// autonomous, so t is accepted for interface stability only.
inline double eval_drift(const DriftSpec& spec, double /*t*/, double x,
                         int order) {
  if (order < 0 || order > DriftSpec::max_order)
    throw UnsupportedOrder(order, DriftSpec::max_order);
  switch (spec.kind) {
    case DriftKind::zero:
      return 0.0;
    case DriftKind::linear:
      if (order == 0) return -spec.rate * x + spec.offset;
      if (order == 1) return -spec.rate;
      return 0.0;
    case DriftKind::quadratic:
      if (order == 0) return -0.5 * spec.curvature * x * x;
      if (order == 1) return -spec.curvature * x;
      if (order == 2) return -spec.curvature;
      return 0.0;
    case DriftKind::logcosh: {
      const double k = spec.curvature;
      if (order == 0) return -k * detail::log_cosh(x);
      const double th = std::tanh(x);
      const double sech2 = 1.0 - th * th;
      if (order == 1) return -k * th;
      if (order == 2) return -k * sech2;
      return 2.0 * k * th * sech2;
    }
    case DriftKind::polynomial:
      return detail::polynomial_derivative(spec.coefficients, x, order);
  }
  return 0.0;
}

/// n-th derivative of u0 at x, n in 0..2.
inline double eval_initial(const InitialConditionSpec& spec, double x,
                           int order) {
  if (order < 0 || order > InitialConditionSpec::max_order)
    throw UnsupportedOrder(order, InitialConditionSpec::max_order);
  switch (spec.kind) {
    case InitialKind::arctan_shift: {
      if (order == 0) return std::numbers::pi / 2.0 + std::atan(x) + spec.delta;
      const double q = 1.0 + x * x;
      if (order == 1) return 1.0 / q;
      return -2.0 * x / (q * q);
    }
    case InitialKind::exponential:
      return std::exp(x);
    case InitialKind::affine:
      if (order == 0) return spec.slope * x + spec.intercept;
      if (order == 1) return spec.slope;
      return 0.0;
  }
  return 0.0;
}

/// Spatial interval on which sup norms and sign hypotheses are evaluated.
struct Window {
  double x_lo = -2.0;
  double x_hi = 2.0;
  int n_scan = 401;

  void validate() const {
    if (!(x_lo < x_hi)) throw InvalidArgument("window requires x_lo < x_hi");
    if (n_scan < 2) throw InvalidArgument("window requires n_scan >= 2");
  }
  bool contains(double x) const { return x >= x_lo && x <= x_hi; }
  double node(int i) const {
    if (i == n_scan - 1) return x_hi;
    return x_lo + (x_hi - x_lo) * static_cast<double>(i) /
                      static_cast<double>(n_scan - 1);
  }
};

struct Scenario {
  DriftSpec drift;
  InitialConditionSpec ic;
  Window window;
  double horizon = 1.0;
};

struct SupNorms {
  double drift_d1 = 0.0;  // ||b'||
  double drift_d2 = 0.0;  // ||b''||
  double drift_d3 = 0.0;  // ||b'''||
  double ic_d0 = 0.0;     // ||u0||
  double ic_d1 = 0.0;     // ||u0'||
  double ic_d2 = 0.0;     // ||u0''||
};

/// Sign hypotheses read off the window scan grid; sup norms are the scan
/// maxima refined between nodes.
///   cc1:  b'' <= 0           cc11: b'' <= -C < 0
///   cc2:  u0 > 0, u0' > 0    cc22: u0 >= C > 0, u0' > 0
struct HypothesisReport {
  Window window;
  double horizon = 1.0;
  bool cc1 = false;
  bool cc11 = false;
  bool cc2 = false;
  bool cc22 = false;
  double cc11_constant = 0.0;  // grid min of -b''
  double cc22_constant = 0.0;  // grid min of u0
  SupNorms norms;
  std::vector<double> cc1_violations;  // x with b'' > 0
  std::vector<double> cc2_violations;  // x with u0 <= 0 or u0' <= 0
  // Holder continuity of the top derivative holds for every builtin family
  // by construction and is not scanned.
  bool holder_regularity_assumed = true;
  std::string interpretation =
      "sup norms and sign conditions evaluated on the window, not globally";
};

namespace detail {

/// Maximum of |f| over [a, b] by golden-section search; assumes |f| is
/// unimodal there, which holds between neighbours of a discrete maximum.
template <class F>
double golden_max(F&& f, double a, double b) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = std::abs(f(c)), fd = std::abs(f(d));
  for (int i = 0; i < 80 && b - a > 1e-14 * (1.0 + std::abs(a)); ++i) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = std::abs(f(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = std::abs(f(d));
    }
  }
  return std::max({fc, fd, std::abs(f(a)), std::abs(f(b))});
}

/// Sup of |f| on the window: the scan maximum, refined around every discrete
/// local maximum so that peaks between scan nodes are not missed.
template <class F>
double window_sup(F&& f, const Window& w, const std::vector<double>& scanned) {
  const int n = w.n_scan;
  double sup = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = std::abs(scanned[static_cast<std::size_t>(i)]);
    sup = std::max(sup, v);
    const bool left = i == 0 || v >= std::abs(scanned[static_cast<std::size_t>(i - 1)]);
    const bool right = i == n - 1 || v >= std::abs(scanned[static_cast<std::size_t>(i + 1)]);
    if (!left || !right) continue;
    const double a = w.node(std::max(i - 1, 0)), b = w.node(std::min(i + 1, n - 1));
    sup = std::max(sup, golden_max(f, a, b));
  }
  return sup;
}

}  // namespace detail

inline HypothesisReport check_hypotheses(const DriftSpec& drift,
                                         const InitialConditionSpec& ic,
                                         const Window& window, double horizon) {
  window.validate();
  if (!(horizon > 0.0)) throw InvalidArgument("horizon T must be positive");

  HypothesisReport r;
  r.window = window;
  r.horizon = horizon;
  double min_neg_b2 = INFINITY;
  double min_u0 = INFINITY;
  bool u0_positive = true;
  bool u0_increasing = true;
  const auto n = static_cast<std::size_t>(window.n_scan);
  std::vector<std::vector<double>> scanned(6, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double x = window.node(static_cast<int>(i));
    for (int order = 1; order <= 3; ++order)
      scanned[static_cast<std::size_t>(order - 1)][i] = eval_drift(drift, 0.0, x, order);
    for (int order = 0; order <= 2; ++order)
      scanned[static_cast<std::size_t>(3 + order)][i] = eval_initial(ic, x, order);
    const double b2 = scanned[1][i];
    const double u0 = scanned[3][i];
    const double u1 = scanned[4][i];
    min_neg_b2 = std::min(min_neg_b2, -b2);
    min_u0 = std::min(min_u0, u0);
    if (b2 > 0.0) r.cc1_violations.push_back(x);
    const bool pos = u0 > 0.0;
    const bool inc = u1 > 0.0;
    u0_positive = u0_positive && pos;
    u0_increasing = u0_increasing && inc;
    if (!pos || !inc) r.cc2_violations.push_back(x);
  }
  auto drift_sup = [&](int order) {
    return detail::window_sup([&](double x) { return eval_drift(drift, 0.0, x, order); }, window,
                              scanned[static_cast<std::size_t>(order - 1)]);
  };
  auto ic_sup = [&](int order) {
    return detail::window_sup([&](double x) { return eval_initial(ic, x, order); }, window,
                              scanned[static_cast<std::size_t>(3 + order)]);
  };
  r.norms.drift_d1 = drift_sup(1);
  r.norms.drift_d2 = drift_sup(2);
  r.norms.drift_d3 = drift_sup(3);
  r.norms.ic_d0 = ic_sup(0);
  r.norms.ic_d1 = ic_sup(1);
  r.norms.ic_d2 = ic_sup(2);
  r.cc11_constant = min_neg_b2;
  r.cc22_constant = min_u0;
  r.cc1 = r.cc1_violations.empty();
  r.cc11 = min_neg_b2 > 0.0;
  r.cc2 = u0_positive && u0_increasing;
  r.cc22 = r.cc2 && min_u0 > 0.0;
  return r;
}

/// Closed-form constants built from window sup norms at horizon T:
///   C1 = exp(T ||b'||)
///   C2 = C1^2 T ||b''||
///   C3 = ||u0'|| C1^2 + ||u0|| C2
///   C4 = 3 ||u0'|| C1 C2 + ||u0''|| C1^3 + ||u0|| T C1^3 (||b'''|| + 2T||b''||^2)
///   C5(t) = C^4 exp(-4T ||b'||) t^3 / 3,  C the cc11 constant
/// c5_joint uses a single C valid for both cc11 and cc22 (their minimum).
struct BoundConstants {
  double horizon = 1.0;
  double t = 1.0;
  double c1 = 1.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
  double d2jy_bound = 0.0;  // T C1^3 (||b'''|| + 2T||b''||^2)
  std::optional<double> c5;
  std::optional<double> c5_joint;
};

inline double c5_value(double c, double horizon, double drift_d1, double t) {
  return std::pow(c, 4) * std::exp(-4.0 * horizon * drift_d1) * t * t * t / 3.0;
}

inline BoundConstants constants(const HypothesisReport& report, double horizon,
                                double t) {
  if (!(t > 0.0 && t <= horizon))
    throw InvalidArgument("constants require 0 < t <= T");
  const SupNorms& n = report.norms;
  BoundConstants k;
  k.horizon = horizon;
  k.t = t;
  k.c1 = std::exp(horizon * n.drift_d1);
  k.c2 = k.c1 * k.c1 * horizon * n.drift_d2;
  k.c3 = n.ic_d1 * k.c1 * k.c1 + n.ic_d0 * k.c2;
  const double c1_cubed = k.c1 * k.c1 * k.c1;
  k.d2jy_bound =
      horizon * c1_cubed * (n.drift_d3 + 2.0 * horizon * n.drift_d2 * n.drift_d2);
  k.c4 = 3.0 * n.ic_d1 * k.c1 * k.c2 + n.ic_d2 * c1_cubed + n.ic_d0 * k.d2jy_bound;
  if (report.cc11) {
    k.c5 = c5_value(report.cc11_constant, horizon, n.drift_d1, t);
    if (report.cc22)
      k.c5_joint = c5_value(std::min(report.cc11_constant, report.cc22_constant),
                            horizon, n.drift_d1, t);
  }
  return k;
}

}  // namespace scelab
