#pragma once

// Characteristics of the continuity equation along one Brownian path.
//   forward   X_{s,t}(x) = x + int_s^t b(X_{s,r}) dr + B_t - B_s
//   backward  Y_{s,t}(x) = x - int_s^t b(Y_{r,t}) dr - (B_t - B_s)
//   solution  u(t,x) = u0(Y_{0,t}(x)) * JY_{0,t}(x),
//             JY_{s,t}(x) = exp(-int_s^t b'(Y_{v,t}(x)) dv)
// Both directions use explicit Euler on the path's grid; the noise is
// additive, so the scheme is strong order 1.

#include <cmath>
#include <ostream>
#include <vector>

#include "scelab/errors.hpp"
#include "scelab/paths.hpp"
#include "scelab/quadrature.hpp"
#include "scelab/scenario.hpp"

namespace scelab {

/// States beyond this magnitude abort the path.
inline constexpr double kDivergenceBound = 1e8;

/// Grid values of a characteristic on nodes first..last.
struct Trajectory {
  TimeGrid grid;
  int first = 0;
  int last = 0;
  double x = 0.0;  // anchor value
  std::vector<double> values;

  double at(int k) const { return values[static_cast<std::size_t>(k - first)]; }
  double start_time() const { return grid.time(first); }
  double end_time() const { return grid.time(last); }
};

/// X_k ~ X_{s, t_k}(x); values.front() == x exactly.
struct ForwardTrajectory : Trajectory {};

/// Y_k ~ Y_{t_k, t}(x); values.back() == x exactly.
struct BackwardTrajectory : Trajectory {};

namespace detail {

inline void guard(double state, int step) {
  if (!std::isfinite(state) || std::abs(state) > kDivergenceBound)
    throw DivergenceError(step, state);
}

inline void check_interval(const TimeGrid& g, double s, double t, int& ks, int& kt) {
  ks = g.node(s);
  kt = g.node(t);
  if (ks > kt) throw InvalidArgument("characteristics require s <= t");
}

}  // namespace detail

/// X_{k+1} = X_k + b(t_k, X_k) h + dB_k.
inline ForwardTrajectory solve_forward(const DriftSpec& drift,
                                       const BrownianPath& path, double s,
                                       double t, double x) {
  const TimeGrid& g = path.grid();
  int ks = 0, kt = 0;
  detail::check_interval(g, s, t, ks, kt);
  const double h = g.step();
  ForwardTrajectory traj;
  traj.grid = g;
  traj.first = ks;
  traj.last = kt;
  traj.x = x;
  traj.values.resize(static_cast<std::size_t>(kt - ks + 1));
  traj.values[0] = x;
  double state = x;
  for (int k = ks; k < kt; ++k) {
    state = state + eval_drift(drift, g.time(k), state, 0) * h + path.increment(k);
    detail::guard(state, k + 1);
    traj.values[static_cast<std::size_t>(k + 1 - ks)] = state;
  }
  return traj;
}

/// Y_k = Y_{k+1} - b(t_{k+1}, Y_{k+1}) h - dB_k from Y(t) = x, stepping
/// backward in time with the drift taken at the known later node.
inline BackwardTrajectory solve_backward(const DriftSpec& drift,
                                         const BrownianPath& path, double s,
                                         double t, double x) {
  const TimeGrid& g = path.grid();
  int ks = 0, kt = 0;
  detail::check_interval(g, s, t, ks, kt);
  const double h = g.step();
  BackwardTrajectory traj;
  traj.grid = g;
  traj.first = ks;
  traj.last = kt;
  traj.x = x;
  traj.values.resize(static_cast<std::size_t>(kt - ks + 1));
  traj.values.back() = x;
  double state = x;
  for (int k = kt - 1; k >= ks; --k) {
    state = state - eval_drift(drift, g.time(k + 1), state, 0) * h - path.increment(k);
    detail::guard(state, k);
    traj.values[static_cast<std::size_t>(k - ks)] = state;
  }
  return traj;
}

/// b^{(order)} evaluated along the trajectory nodes.
inline std::vector<double> drift_along(const DriftSpec& drift, const Trajectory& traj,
                                       int order) {
  std::vector<double> out(traj.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = eval_drift(drift, traj.grid.time(traj.first + static_cast<int>(i)),
                        traj.values[i], order);
  return out;
}

/// JY_{s,t}(x) = exp(-Q), Q the trapezoid of b'(v, Y_{v,t}(x)) over [s, t].
inline double jacobian_backward(const DriftSpec& drift, const BackwardTrajectory& traj) {
  const std::vector<double> b1 = drift_along(drift, traj, 1);
  const double jy = std::exp(-quad::trapezoid(b1, traj.grid.step()));
  if (!(jy > 0.0)) throw DivergenceError(traj.first, jy);
  return jy;
}

struct Solution {
  double u = 0.0;
  double y0 = 0.0;        // Y_{0,t}(x)
  double jacobian = 1.0;  // JY_{0,t}(x)
  BackwardTrajectory trajectory;
};

/// u(t, x) = u0(Y_{0,t}(x)) JY_{0,t}(x) along `path`.
inline Solution solution_at(const DriftSpec& drift, const InitialConditionSpec& ic,
                            const BrownianPath& path, double t, double x) {
  if (!(t > 0.0 && t <= path.grid().horizon() * (1.0 + 1e-12)))
    throw InvalidArgument("solution_at requires 0 < t <= T");
  Solution sol;
  sol.trajectory = solve_backward(drift, path, 0.0, t, x);
  sol.y0 = sol.trajectory.values.front();
  sol.jacobian = jacobian_backward(drift, sol.trajectory);
  sol.u = eval_initial(ic, sol.y0, 0) * sol.jacobian;
  return sol;
}

/// Debug dump with header "k,t,X" or "k,t,Y".
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj,
                                 char label) {
  const auto old = os.precision(17);
  os << "k,t," << label << '\n';
  for (int k = traj.first; k <= traj.last; ++k)
    os << k << ',' << traj.grid.time(k) << ',' << traj.at(k) << '\n';
  os.precision(old);
}

}  // namespace scelab
