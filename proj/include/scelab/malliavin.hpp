#pragma once

// Pathwise Malliavin derivatives of the inverse flow Y, its Jacobian JY and
// the solution u = u0(Y) JY, evaluated on the nodes of the path's grid.
//
// With Y_v = Y_{v,t}(x) along one backward trajectory:
//   D_a Y_{v,t}   = -1[v <= a <= t] exp(-int_v^a b'(Y_r) dr)
//   D_a JY_{s,t}  = -JY_{s,t} int_s^t b''(Y_v) D_a Y_{v,t} dv
//   D_b D_a Y_{v,t} = 1[v <= a <= t] exp(-int_v^a b'(Y_r) dr)
//                     * int_v^a b''(Y_r) D_b Y_{r,t} dr
//   D_b D_a JY_{s,t} = JY (int b'' D_b Y)(int b'' D_a Y)
//                      - JY int_s^t (b''' D_b Y_v D_a Y_v + b'' D_b D_a Y_v) dv
// Every integral runs over the exact support of its integrand and uses the
// trapezoid rule on grid nodes.
//
// Two evaluation routes are provided. The per-node functions (dY, dJY, d2Y,
// d2JY) evaluate the nested quadratures as written. The profile builders
// factor the exponentials through the running integrals
//   F(a) = int_0^a b',  G(a) = int_0^a b'' e^F,
//   H(a) = int_0^a b''' e^{2F},  K(a) = int_0^a b'' e^F G,
// which makes whole profiles O(n) and second-order matrices O(n^2).

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "scelab/errors.hpp"
#include "scelab/flow.hpp"
#include "scelab/quadrature.hpp"
#include "scelab/scenario.hpp"

namespace scelab {

/// Grid function on the nodes 0..n of a time grid, zero past support_end.
struct GridFunction {
  TimeGrid grid;
  int support_end = 0;
  std::vector<double> values;

  double operator[](int k) const { return values[static_cast<std::size_t>(k)]; }
};

/// L^2([0,T]) inner product by the trapezoid rule over the common support.
inline double h_inner(const GridFunction& a, const GridFunction& b) {
  if (!(a.grid == b.grid) || a.values.size() != b.values.size())
    throw GridMismatch("h_inner requires profiles on the same grid");
  const int end = std::min(a.support_end, b.support_end);
  std::vector<double> prod(static_cast<std::size_t>(end + 1));
  for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = a.values[k] * b.values[k];
  return quad::trapezoid(prod, a.grid.step());
}

inline double h_norm(const GridFunction& a) { return std::sqrt(h_inner(a, a)); }

// ---------------------------------------------------------------------------
// Per-node evaluation.

namespace detail {

/// Drift derivatives along a backward trajectory plus the running integral
/// of b'. Indices are absolute grid nodes.
class TrajectoryTerms {
 public:
  TrajectoryTerms(const DriftSpec& drift, const BackwardTrajectory& traj)
      : traj_(&traj),
        b1_(drift_along(drift, traj, 1)),
        b2_(drift_along(drift, traj, 2)),
        b3_(drift_along(drift, traj, 3)),
        f_(quad::cumulative_trapezoid(b1_, traj.grid.step())) {}

  int first() const { return traj_->first; }
  int last() const { return traj_->last; }
  double h() const { return traj_->grid.step(); }
  double b2(int v) const { return b2_[idx(v)]; }
  double b3(int v) const { return b3_[idx(v)]; }
  /// int_a^b b'(Y_r) dr.
  double b1_integral(int a, int b) const { return f_[idx(b)] - f_[idx(a)]; }
  double jacobian() const { return std::exp(-b1_integral(first(), last())); }

  /// D_a Y_{v,t}.
  double dy(int v, int a) const {
    if (a < v || a > last()) return 0.0;
    return -std::exp(-b1_integral(v, a));
  }

  /// int_s^e g(v) dv by the trapezoid rule over nodes s..e.
  template <class G>
  double integrate(int s, int e, G&& g) const {
    if (e <= s) return 0.0;
    double acc = 0.5 * (g(s) + g(e));
    for (int v = s + 1; v < e; ++v) acc += g(v);
    return acc * h();
  }

  /// D_b D_a Y_{v,t}.
  double d2y(int v, int a, int b) const {
    if (a < v || a > last() || b < v || b > last()) return 0.0;
    const int m = std::min(a, b);
    const double inner = integrate(v, m, [&](int r) { return b2(r) * dy(r, b); });
    return std::exp(-b1_integral(v, a)) * inner;
  }

 private:
  std::size_t idx(int k) const { return static_cast<std::size_t>(k - traj_->first); }

  const BackwardTrajectory* traj_;
  std::vector<double> b1_, b2_, b3_, f_;
};

inline int alpha_node(const BackwardTrajectory& traj, double alpha) {
  return traj.grid.node(alpha);
}

}  // namespace detail

/// D_a Y_{s,t}(x), s and t the trajectory's anchors. Zero off [s, t].
inline double dY(const DriftSpec& drift, const BackwardTrajectory& traj, double alpha) {
  const detail::TrajectoryTerms terms(drift, traj);
  return terms.dy(terms.first(), detail::alpha_node(traj, alpha));
}

/// D_a JY_{s,t}(x).
inline double dJY(const DriftSpec& drift, const BackwardTrajectory& traj, double alpha) {
  const detail::TrajectoryTerms terms(drift, traj);
  const int a = detail::alpha_node(traj, alpha);
  if (a < terms.first() || a > terms.last()) return 0.0;
  const double integral = terms.integrate(
      terms.first(), a, [&](int v) { return terms.b2(v) * terms.dy(v, a); });
  return -terms.jacobian() * integral;
}

/// D_b D_a Y_{s,t}(x).
inline double d2Y(const DriftSpec& drift, const BackwardTrajectory& traj, double alpha,
                  double beta) {
  const detail::TrajectoryTerms terms(drift, traj);
  return terms.d2y(terms.first(), detail::alpha_node(traj, alpha),
                   detail::alpha_node(traj, beta));
}

/// D_b D_a JY_{s,t}(x).
inline double d2JY(const DriftSpec& drift, const BackwardTrajectory& traj, double alpha,
                   double beta) {
  const detail::TrajectoryTerms terms(drift, traj);
  const int s = terms.first();
  const int a = detail::alpha_node(traj, alpha);
  const int b = detail::alpha_node(traj, beta);
  if (a < s || a > terms.last() || b < s || b > terms.last()) return 0.0;
  const double jy = terms.jacobian();
  const double ia = terms.integrate(s, a, [&](int v) { return terms.b2(v) * terms.dy(v, a); });
  const double ib = terms.integrate(s, b, [&](int v) { return terms.b2(v) * terms.dy(v, b); });
  const double second = terms.integrate(s, std::min(a, b), [&](int v) {
    return terms.b3(v) * terms.dy(v, b) * terms.dy(v, a) + terms.b2(v) * terms.d2y(v, a, b);
  });
  return jy * ia * ib - jy * second;
}

// ---------------------------------------------------------------------------
// Whole profiles.

/// alpha -> D_a Y_t(x), D_a JY_t(x), D_a u(t,x) on every node of [0, T].
struct DerivativeProfile {
  double t = 0.0;
  double x = 0.0;
  double y0 = 0.0;
  double jacobian = 1.0;
  double u = 0.0;
  GridFunction dY;
  GridFunction dJY;
  GridFunction du;
};

namespace detail {

/// Running integrals F, G, H, K of a backward trajectory anchored at 0.
struct RunningIntegrals {
  int n_t = 0;
  double jacobian = 1.0;
  std::vector<double> decay;  // exp(-F)
  std::vector<double> g, hh, k;

  RunningIntegrals(const DriftSpec& drift, const BackwardTrajectory& traj) {
    if (traj.first != 0)
      throw InvalidArgument("profiles require a trajectory anchored at s = 0");
    n_t = traj.last;
    const double h = traj.grid.step();
    const std::vector<double> b1 = drift_along(drift, traj, 1);
    const std::vector<double> b2 = drift_along(drift, traj, 2);
    const std::vector<double> b3 = drift_along(drift, traj, 3);
    const std::vector<double> f = quad::cumulative_trapezoid(b1, h);
    const std::size_t n = f.size();
    decay.resize(n);
    std::vector<double> w2(n), w3(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double grow = std::exp(f[i]);
      decay[i] = std::exp(-f[i]);
      w2[i] = b2[i] * grow;
      w3[i] = b3[i] * grow * grow;
    }
    g = quad::cumulative_trapezoid(w2, h);
    hh = quad::cumulative_trapezoid(w3, h);
    std::vector<double> w4(n);
    for (std::size_t i = 0; i < n; ++i) w4[i] = w2[i] * g[i];
    k = quad::cumulative_trapezoid(w4, h);
    jacobian = std::exp(-f.back());
  }
};

struct InitialAtY {
  double u0, u1, u2;
  InitialAtY(const InitialConditionSpec& ic, double y)
      : u0(eval_initial(ic, y, 0)), u1(eval_initial(ic, y, 1)), u2(eval_initial(ic, y, 2)) {}
};

}  // namespace detail

inline DerivativeProfile du_profile(const DriftSpec& drift, const InitialConditionSpec& ic,
                                    const BackwardTrajectory& traj) {
  const detail::RunningIntegrals ri(drift, traj);
  const int n = traj.grid.steps();
  DerivativeProfile p;
  p.t = traj.end_time();
  p.x = traj.x;
  p.y0 = traj.values.front();
  p.jacobian = ri.jacobian;
  const detail::InitialAtY u(ic, p.y0);
  p.u = u.u0 * ri.jacobian;
  for (GridFunction* gf : {&p.dY, &p.dJY, &p.du}) {
    gf->grid = traj.grid;
    gf->support_end = ri.n_t;
    gf->values.assign(static_cast<std::size_t>(n + 1), 0.0);
  }
  for (int a = 0; a <= ri.n_t; ++a) {
    const auto i = static_cast<std::size_t>(a);
    const double dy = -ri.decay[i];
    const double djy = ri.jacobian * ri.decay[i] * ri.g[i];
    p.dY.values[i] = dy;
    p.dJY.values[i] = djy;
    p.du.values[i] = u.u1 * dy * ri.jacobian + u.u0 * djy;
  }
  return p;
}

/// (alpha, beta) -> D_b D_a of Y_t(x), JY_t(x) and u(t,x); row-major over
/// the nodes 0..n, zero outside [0, t]^2.
struct SecondDerivativeProfile {
  TimeGrid grid;
  int support_end = 0;
  std::vector<double> d2Y;
  std::vector<double> d2JY;
  std::vector<double> d2u;

  std::size_t dim() const { return static_cast<std::size_t>(grid.steps() + 1); }
  double y(int a, int b) const { return d2Y[at(a, b)]; }
  double jy(int a, int b) const { return d2JY[at(a, b)]; }
  double u(int a, int b) const { return d2u[at(a, b)]; }

 private:
  std::size_t at(int a, int b) const {
    return static_cast<std::size_t>(a) * dim() + static_cast<std::size_t>(b);
  }
};

namespace detail {

struct SecondOrderEntry {
  double y, jy, u;
};

inline SecondOrderEntry second_order_entry(const RunningIntegrals& ri, const InitialAtY& u,
                                           int a, int b) {
  const auto ia = static_cast<std::size_t>(a);
  const auto ib = static_cast<std::size_t>(b);
  const auto im = static_cast<std::size_t>(std::min(a, b));
  const double ea = ri.decay[ia], eb = ri.decay[ib];
  const double ga = ri.g[ia], gb = ri.g[ib], gm = ri.g[im];
  const double jy = ri.jacobian;
  const double d2y = -ea * eb * gm;
  const double d2jy = jy * ea * eb * (ga * gb - ri.hh[im] + gm * gm - ri.k[im]);
  const double dya = -ea, dyb = -eb;
  const double djya = jy * ea * ga, djyb = jy * eb * gb;
  const double d2u = u.u1 * dya * djyb + u.u1 * d2y * jy + u.u2 * dyb * dya * jy +
                     u.u0 * d2jy + u.u1 * dyb * djya;
  return {d2y, d2jy, d2u};
}

}  // namespace detail

inline SecondDerivativeProfile d2u_profile(const DriftSpec& drift,
                                           const InitialConditionSpec& ic,
                                           const BackwardTrajectory& traj) {
  const detail::RunningIntegrals ri(drift, traj);
  const detail::InitialAtY u(ic, traj.values.front());
  SecondDerivativeProfile p;
  p.grid = traj.grid;
  p.support_end = ri.n_t;
  const std::size_t dim = p.dim();
  p.d2Y.assign(dim * dim, 0.0);
  p.d2JY.assign(dim * dim, 0.0);
  p.d2u.assign(dim * dim, 0.0);
  for (int a = 0; a <= ri.n_t; ++a) {
    for (int b = 0; b <= ri.n_t; ++b) {
      const auto e = detail::second_order_entry(ri, u, a, b);
      const std::size_t i = static_cast<std::size_t>(a) * dim + static_cast<std::size_t>(b);
      p.d2Y[i] = e.y;
      p.d2JY[i] = e.jy;
      p.d2u[i] = e.u;
    }
  }
  return p;
}

/// max |D_b D_a u(t,x)| over the grid without materializing the matrix.
inline double d2u_sup(const DriftSpec& drift, const InitialConditionSpec& ic,
                      const BackwardTrajectory& traj) {
  const detail::RunningIntegrals ri(drift, traj);
  const detail::InitialAtY u(ic, traj.values.front());
  double sup = 0.0;
  for (int a = 0; a <= ri.n_t; ++a)
    for (int b = a; b <= ri.n_t; ++b)
      sup = std::max(sup, std::abs(detail::second_order_entry(ri, u, a, b).u));
  return sup;
}

/// Debug dump with header "alpha,dY,dJY,du".
inline void write_profile_csv(std::ostream& os, const DerivativeProfile& p) {
  const auto old = os.precision(17);
  os << "alpha,dY,dJY,du\n";
  for (std::size_t k = 0; k < p.du.values.size(); ++k)
    os << p.du.grid.time(static_cast<int>(k)) << ',' << p.dY.values[k] << ','
       << p.dJY.values[k] << ',' << p.du.values[k] << '\n';
  os.precision(old);
}

// ---------------------------------------------------------------------------
// Bound audit.

enum class Verdict { pass, fail, not_applicable };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::not_applicable: return "not-applicable";
  }
  return "unknown";
}

struct BoundCheck {
  std::string name;
  Verdict verdict = Verdict::not_applicable;
  double observed = 0.0;
  double bound = 0.0;
  std::string reason;
};

/// A1 + A2 + A3 decomposition of ||Du||^2:
///   A1 = u0'(Y)^2 JY^2 ||DY||^2,  A2 = u0(Y)^2 ||DJY||^2,
///   A3 = 2 u0'(Y) JY u0(Y) <DY, DJY>.
struct NormDecomposition {
  double du_norm_sq = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  double relative_error = 0.0;
};

inline NormDecomposition decompose(const InitialConditionSpec& ic, const DerivativeProfile& p) {
  const detail::InitialAtY u(ic, p.y0);
  NormDecomposition d;
  d.du_norm_sq = h_inner(p.du, p.du);
  d.a1 = u.u1 * u.u1 * p.jacobian * p.jacobian * h_inner(p.dY, p.dY);
  d.a2 = u.u0 * u.u0 * h_inner(p.dJY, p.dJY);
  d.a3 = 2.0 * u.u1 * p.jacobian * u.u0 * h_inner(p.dY, p.dJY);
  const double sum = d.a1 + d.a2 + d.a3;
  const double scale = std::max({std::abs(d.du_norm_sq), std::abs(d.a1) + std::abs(d.a2) +
                                                             std::abs(d.a3)});
  d.relative_error = scale > 0.0 ? std::abs(d.du_norm_sq - sum) / scale : 0.0;
  return d;
}

/// Relative slack allowed when comparing an observed sup against a constant
/// that it may equal exactly (e.g. |D_a Y| = C1 for linear drift).
inline constexpr double kBoundRelTol = 1e-12;
inline constexpr double kDecompositionTol = 1e-10;

struct MalliavinReport {
  double t = 0.0;
  double x = 0.0;
  bool in_window = true;
  double u = 0.0;
  double jacobian = 1.0;
  NormDecomposition norm;
  std::vector<BoundCheck> checks;
  // Two readings of the lower bound on |D_a JY| under cc11, for a in (0, t]:
  //   as printed:  C t exp(+||b'|| t) exp(-||b'|| a)
  //   derived:     C a exp(-||b'|| t) exp(-||b'|| a)
  std::optional<bool> djy_lower_as_printed;
  std::optional<bool> djy_lower_derived;

  const BoundCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
  bool any_failed() const {
    return std::any_of(checks.begin(), checks.end(),
                       [](const BoundCheck& c) { return c.verdict == Verdict::fail; });
  }
};

inline bool trajectory_in_window(const BackwardTrajectory& traj, const Window& w) {
  return std::all_of(traj.values.begin(), traj.values.end(),
                     [&](double y) { return w.contains(y); });
}

inline MalliavinReport bounds_report(const DriftSpec& drift, const InitialConditionSpec& ic,
                                     const HypothesisReport& hyp, const BoundConstants& k,
                                     const BackwardTrajectory& traj,
                                     bool second_order = true) {
  const DerivativeProfile p = du_profile(drift, ic, traj);
  MalliavinReport r;
  r.t = p.t;
  r.x = p.x;
  r.u = p.u;
  r.jacobian = p.jacobian;
  r.in_window = trajectory_in_window(traj, hyp.window);
  r.norm = decompose(ic, p);

  auto sup_abs = [](const GridFunction& f) {
    double s = 0.0;
    for (double v : f.values) s = std::max(s, std::abs(v));
    return s;
  };
  auto max_of = [](const GridFunction& f) {
    double s = -INFINITY;
    for (double v : f.values) s = std::max(s, v);
    return s;
  };
  auto add = [&](std::string name, bool applicable, std::string why_not, bool ok,
                 double observed, double bound, std::string reason) {
    BoundCheck c;
    c.name = std::move(name);
    c.observed = observed;
    c.bound = bound;
    if (!applicable) {
      c.verdict = Verdict::not_applicable;
      c.reason = std::move(why_not);
    } else {
      c.verdict = ok ? Verdict::pass : Verdict::fail;
      c.reason = std::move(reason);
    }
    r.checks.push_back(std::move(c));
  };
  auto below = [](double observed, double bound) {
    return observed <= bound * (1.0 + kBoundRelTol);
  };
  const std::string exited = "trajectory left the hypothesis window";
  const bool w = r.in_window;

  const double max_dy = max_of(p.dY);
  add("dY_nonpositive", true, "", max_dy <= 0.0, max_dy, 0.0, "max_a D_a Y <= 0");
  add("jacobian_positive", true, "", p.jacobian > 0.0, p.jacobian, 0.0, "JY > 0");
  const double max_djy = max_of(p.dJY);
  add("dJY_nonpositive", w && hyp.cc1, w ? "cc1 fails on the window" : exited,
      max_djy <= 0.0, max_djy, 0.0, "max_a D_a JY <= 0 under cc1");

  const double sup_dy = sup_abs(p.dY);
  add("dY_bound_C1", w, exited, below(sup_dy, k.c1), sup_dy, k.c1, "sup |D_a Y| <= C1");
  add("jacobian_bound_C1", w, exited, below(p.jacobian, k.c1), p.jacobian, k.c1, "JY <= C1");
  const double sup_djy = sup_abs(p.dJY);
  add("dJY_bound_C2", w, exited, below(sup_djy, k.c2), sup_djy, k.c2, "sup |D_a JY| <= C2");
  const double sup_du = sup_abs(p.du);
  add("du_bound_C3", w, exited, below(sup_du, k.c3), sup_du, k.c3, "sup |D_a u| <= C3");
  if (second_order) {
    const double sup_d2u = d2u_sup(drift, ic, traj);
    add("d2u_bound_C4", w, exited, below(sup_d2u, k.c4), sup_d2u, k.c4,
        "sup |D_b D_a u| <= C4");
  }

  add("A1_positive", w && hyp.cc2, w ? "cc2 fails on the window" : exited,
      r.norm.a1 > 0.0, r.norm.a1, 0.0, "A1 > 0 under cc2");
  add("A2_nonnegative", true, "", r.norm.a2 >= 0.0, r.norm.a2, 0.0, "A2 >= 0");
  add("A3_nonnegative", w && hyp.cc1 && hyp.cc2, w ? "cc1 or cc2 fails on the window" : exited,
      r.norm.a3 >= 0.0, r.norm.a3, 0.0, "A3 >= 0 under cc1 and cc2");
  add("decomposition_identity", true, "", r.norm.relative_error <= kDecompositionTol,
      r.norm.relative_error, kDecompositionTol, "||Du||^2 = A1 + A2 + A3");

  const bool c5_applicable = w && hyp.cc11 && hyp.cc22 && k.c5.has_value();
  add("du_norm_lower_C5", c5_applicable,
      w ? "cc11 and cc22 do not both hold on the window" : exited,
      c5_applicable && r.norm.du_norm_sq >= *k.c5, r.norm.du_norm_sq, k.c5.value_or(0.0),
      "||Du||^2 >= C5(t)");

  if (w && hyp.cc11) {
    const double c = hyp.cc11_constant;
    const double nb1 = hyp.norms.drift_d1;
    const double t = p.t;
    bool printed = true, derived = true;
    for (int a = 1; a <= p.dJY.support_end; ++a) {
      const double alpha = p.dJY.grid.time(a);
      const double v = std::abs(p.dJY[a]);
      printed = printed && v >= c * t * std::exp(nb1 * t) * std::exp(-nb1 * alpha);
      derived = derived && v >= c * alpha * std::exp(-nb1 * t) * std::exp(-nb1 * alpha);
    }
    r.djy_lower_as_printed = printed;
    r.djy_lower_derived = derived;
  }
  return r;
}

}  // namespace scelab
