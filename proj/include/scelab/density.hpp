#pragma once

// Monte Carlo law of u(t, x): sampling with per-path Malliavin audit, kernel
// density estimation, Bouleau-Hirsch positivity, the Gaussian sandwich
// parameters from the tilde coupling, and envelope and tail checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scelab/errors.hpp"
#include "scelab/flow.hpp"
#include "scelab/malliavin.hpp"
#include "scelab/parallel.hpp"
#include "scelab/paths.hpp"
#include "scelab/quadrature.hpp"
#include "scelab/scenario.hpp"

namespace scelab {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Index offset of the independent copies w' used by the tilde coupling.
inline constexpr std::uint64_t kTildeStreamOffset = std::uint64_t{1} << 62;

// ---------------------------------------------------------------------------
// Sampling.

struct SampleRecord {
  double u = kNaN;
  double du_norm_sq = kNaN;
  double y0 = kNaN;
  double jacobian = kNaN;
  bool in_window = false;
  bool divergent = false;

  bool included() const { return !divergent && in_window; }
};

/// Per-check counts over many paths. observed_min/max run over applicable
/// paths only; first_failure is the lowest failing path index or -1.
struct CheckTally {
  std::string name;
  std::size_t pass = 0;
  std::size_t fail = 0;
  std::size_t not_applicable = 0;
  double observed_min = INFINITY;
  double observed_max = -INFINITY;
  double bound = 0.0;
  std::string reason;
  std::int64_t first_failure = -1;

  void merge(const CheckTally& o) {
    pass += o.pass;
    fail += o.fail;
    not_applicable += o.not_applicable;
    observed_min = std::min(observed_min, o.observed_min);
    observed_max = std::max(observed_max, o.observed_max);
    if (o.first_failure >= 0 && (first_failure < 0 || o.first_failure < first_failure))
      first_failure = o.first_failure;
  }
};

struct ReadingTally {
  std::size_t holds = 0;
  std::size_t fails = 0;
};

struct AuditSummary {
  std::vector<CheckTally> checks;
  std::size_t paths = 0;
  ReadingTally djy_lower_as_printed;
  ReadingTally djy_lower_derived;

  const CheckTally* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }

  void absorb(const MalliavinReport& r, std::int64_t index) {
    ++paths;
    for (const auto& c : r.checks) {
      CheckTally& t = slot(c.name);
      t.bound = c.bound;
      if (c.verdict == Verdict::not_applicable) {
        ++t.not_applicable;
        continue;
      }
      if (t.reason.empty()) t.reason = c.reason;
      t.observed_min = std::min(t.observed_min, c.observed);
      t.observed_max = std::max(t.observed_max, c.observed);
      if (c.verdict == Verdict::pass) {
        ++t.pass;
      } else {
        ++t.fail;
        if (t.first_failure < 0) t.first_failure = index;
      }
    }
    if (r.djy_lower_as_printed) ++(*r.djy_lower_as_printed ? djy_lower_as_printed.holds
                                                           : djy_lower_as_printed.fails);
    if (r.djy_lower_derived)
      ++(*r.djy_lower_derived ? djy_lower_derived.holds : djy_lower_derived.fails);
  }

  void merge(const AuditSummary& o) {
    paths += o.paths;
    for (const auto& c : o.checks) {
      CheckTally& t = slot(c.name);
      if (t.reason.empty()) t.reason = c.reason;
      t.bound = c.bound;
      t.merge(c);
    }
    djy_lower_as_printed.holds += o.djy_lower_as_printed.holds;
    djy_lower_as_printed.fails += o.djy_lower_as_printed.fails;
    djy_lower_derived.holds += o.djy_lower_derived.holds;
    djy_lower_derived.fails += o.djy_lower_derived.fails;
  }

 private:
  CheckTally& slot(const std::string& name) {
    for (auto& c : checks)
      if (c.name == name) return c;
    checks.push_back(CheckTally{});
    checks.back().name = name;
    return checks.back();
  }
};

struct SamplingOptions {
  std::size_t n = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // The O(n^2) second-order audit runs on paths 0..second_order_paths-1.
  std::size_t second_order_paths = 0;
};

struct SampleSet {
  double t = 0.0;
  double x = 0.0;
  std::uint64_t seed = 0;
  std::vector<SampleRecord> samples;
  AuditSummary audit;

  std::size_t size() const { return samples.size(); }
  std::size_t divergent_count() const {
    return static_cast<std::size_t>(std::count_if(
        samples.begin(), samples.end(), [](const SampleRecord& r) { return r.divergent; }));
  }
  std::size_t window_exit_count() const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(),
                      [](const SampleRecord& r) { return !r.divergent && !r.in_window; }));
  }
  std::size_t excluded_count() const { return divergent_count() + window_exit_count(); }
  double exclusion_fraction() const {
    return samples.empty() ? 0.0
                           : static_cast<double>(excluded_count()) /
                                 static_cast<double>(samples.size());
  }
  double window_exit_fraction() const {
    return samples.empty() ? 0.0
                           : static_cast<double>(window_exit_count()) /
                                 static_cast<double>(samples.size());
  }
  /// Values entering the density: neither divergent nor out of window.
  std::vector<double> included_values() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& r : samples)
      if (r.included()) out.push_back(r.u);
    return out;
  }
};

inline SampleSet sample_solution(const Scenario& sc, const TimeGrid& grid, double t, double x,
                                 const SamplingOptions& opt) {
  if (opt.n < 1) throw InvalidArgument("sample_solution requires n >= 1");
  const HypothesisReport hyp = check_hypotheses(sc.drift, sc.ic, sc.window, sc.horizon);
  const BoundConstants k = constants(hyp, sc.horizon, t);
  grid.node(t);

  SampleSet set;
  set.t = t;
  set.x = x;
  set.seed = opt.seed;
  set.samples.resize(opt.n);
  std::vector<AuditSummary> partial(block_count(opt.n, opt.threads));
  parallel_blocks(opt.n, opt.threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      SampleRecord& rec = set.samples[i];
      const BrownianPath path = sample_path(grid, opt.seed, i);
      BackwardTrajectory traj;
      try {
        traj = solve_backward(sc.drift, path, 0.0, t, x);
      } catch (const DivergenceError&) {
        rec.divergent = true;
        continue;
      }
      const MalliavinReport rep =
          bounds_report(sc.drift, sc.ic, hyp, k, traj, i < opt.second_order_paths);
      if (!std::isfinite(rep.u) || !std::isfinite(rep.norm.du_norm_sq)) {
        rec.divergent = true;
        continue;
      }
      rec.u = rep.u;
      rec.du_norm_sq = rep.norm.du_norm_sq;
      rec.y0 = traj.values.front();
      rec.jacobian = rep.jacobian;
      rec.in_window = rep.in_window;
      partial[b].absorb(rep, static_cast<std::int64_t>(i));
    }
  });
  for (const auto& p : partial) set.audit.merge(p);
  return set;
}

/// Debug dump with header "index,u,du_norm_sq,in_window".
inline void write_samples_csv(std::ostream& os, const SampleSet& set) {
  const auto old = os.precision(17);
  os << "index,u,du_norm_sq,in_window\n";
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& r = set.samples[i];
    os << i << ',' << r.u << ',' << r.du_norm_sq << ',' << (r.in_window ? 1 : 0) << '\n';
  }
  os.precision(old);
}

// ---------------------------------------------------------------------------
// Summary statistics, all accumulated in index order.

inline double sample_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Linear-interpolation quantile of a sorted sample.
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return kNaN;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

// ---------------------------------------------------------------------------
// Kernel density estimate.

/// Roughness of the Gaussian kernel, int K^2.
inline constexpr double kKernelRoughness = 0.28209479177387814;  // 1 / (2 sqrt(pi))

struct KdeOptions {
  std::optional<double> bandwidth;  // nullopt: Silverman's rule
  int nodes = 512;
  std::optional<std::pair<double, double>> range;
};

struct DensityEstimate {
  std::vector<double> z;
  std::vector<double> rho;
  std::vector<double> se;
  double bandwidth = 0.0;
  std::size_t n = 0;
  double sample_mean = 0.0;
  double sample_sd = 0.0;

  double step() const { return z.size() > 1 ? z[1] - z[0] : 0.0; }
  double mass() const { return quad::trapezoid(rho, step()); }
};

/// 1.06 * sd * n^(-1/5).
inline double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2)
    throw InvalidArgument("automatic bandwidth needs at least 2 samples");
  const double sd = sample_sd(samples);
  if (!(sd > 0.0)) throw DegenerateSample("all samples identical; bandwidth undefined");
  return 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
}

inline DensityEstimate kde(std::span<const double> samples, const KdeOptions& opt = {}) {
  if (samples.empty()) throw InvalidArgument("kde requires at least one sample");
  if (opt.nodes < 2) throw InvalidArgument("kde requires at least 2 grid nodes");
  DensityEstimate d;
  d.n = samples.size();
  d.sample_mean = sample_mean(samples);
  d.sample_sd = sample_sd(samples);
  if (opt.bandwidth) {
    if (!(*opt.bandwidth > 0.0)) throw InvalidArgument("bandwidth must be positive");
    d.bandwidth = *opt.bandwidth;
  } else {
    d.bandwidth = silverman_bandwidth(samples);
  }
  const double bw = d.bandwidth;

  double lo = 0.0, hi = 0.0;
  if (opt.range) {
    lo = opt.range->first;
    hi = opt.range->second;
    if (!(lo < hi)) throw InvalidArgument("kde range requires lo < hi");
  } else {
    const double half = 5.0 * std::hypot(d.sample_sd, bw);
    lo = d.sample_mean - half;
    hi = d.sample_mean + half;
  }
  const auto nodes = static_cast<std::size_t>(opt.nodes);
  d.z.resize(nodes);
  for (std::size_t j = 0; j < nodes; ++j)
    d.z[j] = j + 1 == nodes ? hi
                            : lo + (hi - lo) * static_cast<double>(j) /
                                       static_cast<double>(nodes - 1);

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double cutoff = 8.0 * bw;  // kernel weight below e^-32 is dropped
  const double norm = 1.0 / (static_cast<double>(d.n) * bw * std::sqrt(2.0 * std::numbers::pi));
  d.rho.resize(nodes);
  d.se.resize(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    const double z = d.z[j];
    auto first = std::lower_bound(sorted.begin(), sorted.end(), z - cutoff);
    auto last = std::upper_bound(first, sorted.end(), z + cutoff);
    double acc = 0.0;
    for (auto it = first; it != last; ++it) {
      const double r = (z - *it) / bw;
      acc += std::exp(-0.5 * r * r);
    }
    d.rho[j] = acc * norm;
    d.se[j] = std::sqrt(d.rho[j] * kKernelRoughness / (static_cast<double>(d.n) * bw));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Bouleau-Hirsch audit.

struct BouleauHirschReport {
  std::size_t valid = 0;
  double min_du_norm_sq = kNaN;
  std::int64_t argmin = -1;
  std::size_t nonpositive = 0;
  bool positive = false;
  // Lower bound C5(t), compared over in-window samples when cc11 and cc22 hold.
  std::optional<double> c5;
  std::optional<double> min_in_window;
  std::size_t c5_violations = 0;
  std::optional<bool> c5_holds;
};

inline BouleauHirschReport bouleau_hirsch_check(const SampleSet& set,
                                                const HypothesisReport& hyp,
                                                const BoundConstants& k) {
  BouleauHirschReport r;
  double min_all = INFINITY, min_in = INFINITY;
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& s = set.samples[i];
    if (s.divergent) continue;
    ++r.valid;
    if (s.du_norm_sq < min_all) {
      min_all = s.du_norm_sq;
      r.argmin = static_cast<std::int64_t>(i);
    }
    if (!(s.du_norm_sq > 0.0)) ++r.nonpositive;
    if (s.in_window) min_in = std::min(min_in, s.du_norm_sq);
  }
  if (r.valid > 0) r.min_du_norm_sq = min_all;
  r.positive = r.valid > 0 && r.nonpositive == 0;
  if (hyp.cc11 && hyp.cc22 && k.c5) {
    r.c5 = *k.c5;
    for (const auto& s : set.samples)
      if (s.included() && s.du_norm_sq < *k.c5) ++r.c5_violations;
    if (std::isfinite(min_in)) {
      r.min_in_window = min_in;
      r.c5_holds = r.c5_violations == 0;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Gaussian sandwich.

struct GammaPair {
  double gamma2_min = 0.0;
  double gamma2_max = 0.0;
};

/// d / (2 g_max) exp(-(z - m)^2 / (2 g_min)).
inline double lower_envelope(double z, double m, double d, const GammaPair& g) {
  return d / (2.0 * g.gamma2_max) * std::exp(-(z - m) * (z - m) / (2.0 * g.gamma2_min));
}

/// d / (2 g_min) exp(-(z - m)^2 / (2 g_max)).
inline double upper_envelope(double z, double m, double d, const GammaPair& g) {
  return d / (2.0 * g.gamma2_min) * std::exp(-(z - m) * (z - m) / (2.0 * g.gamma2_max));
}

struct SandwichParams {
  std::size_t n_prime = 1000;
  std::vector<double> theta_nodes{0.0, 0.1, 0.5, 1.0, 2.0, 4.0};
  double t0 = 0.1;
  unsigned threads = 1;
};

struct SandwichBounds {
  double m_hat = kNaN;
  double d_hat = kNaN;
  double sigma_hat = kNaN;
  // Extremes of <Du(w), Du(w~)> over pairs whose trajectories both stay in
  // the window; q01/q99 quantify how noisy the extremes are.
  std::optional<GammaPair> empirical;
  double q01 = kNaN;
  double q99 = kNaN;
  std::optional<double> analytic_gamma2_min;  // C5(t), needs cc11 and cc22
  double analytic_gamma2_max = kNaN;          // C3^2 T
  std::vector<double> theta_nodes;
  std::size_t n_prime = 0;
  std::size_t inner_products = 0;
  std::size_t pairs_out_of_window = 0;
  std::size_t pairs_divergent = 0;
  std::size_t nonpositive = 0;
  bool nonpositive_flagged = false;  // nonpositive under cc11 and cc22
  double theta0_identity_error = 0.0;
  double window_exit_fraction = 0.0;
  std::optional<bool> analytic_brackets;  // evaluated when exits <= 1%

  std::optional<GammaPair> analytic() const {
    if (!analytic_gamma2_min) return std::nullopt;
    return GammaPair{*analytic_gamma2_min, analytic_gamma2_max};
  }
};

inline constexpr double kMaxExclusionFraction = 0.01;

inline SandwichBounds sandwich(const Scenario& sc, const TimeGrid& grid, const SampleSet& set,
                               const SandwichParams& params) {
  if (!(set.t >= params.t0))
    throw InvalidArgument("sandwich requires t >= t0");
  if (params.n_prime < 1) throw InvalidArgument("sandwich requires n_prime >= 1");
  if (params.theta_nodes.empty()) throw InvalidArgument("sandwich requires theta nodes");
  for (double th : params.theta_nodes)
    if (!(th >= 0.0)) throw InvalidArgument("theta nodes must be >= 0");

  const HypothesisReport hyp = check_hypotheses(sc.drift, sc.ic, sc.window, sc.horizon);
  const BoundConstants k = constants(hyp, sc.horizon, set.t);

  SandwichBounds s;
  s.theta_nodes = params.theta_nodes;
  s.n_prime = params.n_prime;
  s.window_exit_fraction = set.exclusion_fraction();
  const std::vector<double> values = set.included_values();
  s.m_hat = sample_mean(values);
  s.sigma_hat = sample_sd(values);
  double dev = 0.0;
  for (double v : values) dev += std::abs(v - s.m_hat);
  s.d_hat = values.empty() ? kNaN : dev / static_cast<double>(values.size());
  s.analytic_gamma2_max = k.c3 * k.c3 * sc.horizon;
  if (hyp.cc11 && hyp.cc22 && k.c5) s.analytic_gamma2_min = *k.c5;

  const std::size_t n_theta = params.theta_nodes.size();
  struct PairResult {
    double value = kNaN;
    bool divergent = false;
    bool in_window = false;
  };
  std::vector<PairResult> results(params.n_prime * n_theta);
  std::vector<double> identity_error(params.n_prime, 0.0);

  auto profile_of = [&](const BrownianPath& path, bool& in_window) {
    const BackwardTrajectory traj = solve_backward(sc.drift, path, 0.0, set.t, set.x);
    in_window = trajectory_in_window(traj, sc.window);
    return du_profile(sc.drift, sc.ic, traj);
  };

  parallel_for(params.n_prime, params.threads, [&](std::size_t j) {
    const BrownianPath omega = sample_path(grid, set.seed, j);
    const BrownianPath omega_prime = sample_path(grid, set.seed, kTildeStreamOffset + j);
    bool base_in = false;
    std::optional<DerivativeProfile> base;
    try {
      base = profile_of(omega, base_in);
    } catch (const DivergenceError&) {
    }
    for (std::size_t q = 0; q < n_theta; ++q) {
      PairResult& out = results[j * n_theta + q];
      if (!base) {
        out.divergent = true;
        continue;
      }
      bool tilde_in = false;
      try {
        const DerivativeProfile tilde =
            profile_of(mix_paths(omega, omega_prime, params.theta_nodes[q]), tilde_in);
        out.value = h_inner(base->du, tilde.du);
        out.in_window = base_in && tilde_in;
        if (!std::isfinite(out.value)) out.divergent = true;
        if (params.theta_nodes[q] == 0.0) {
          const double self = h_inner(base->du, base->du);
          identity_error[j] = std::max(identity_error[j], std::abs(out.value - self));
        }
      } catch (const DivergenceError&) {
        out.divergent = true;
      }
    }
  });

  std::vector<double> accepted;
  accepted.reserve(results.size());
  for (const auto& r : results) {
    if (r.divergent) {
      ++s.pairs_divergent;
      continue;
    }
    if (!r.in_window) {
      ++s.pairs_out_of_window;
      continue;
    }
    accepted.push_back(r.value);
    if (!(r.value > 0.0)) ++s.nonpositive;
  }
  for (double e : identity_error) s.theta0_identity_error = std::max(s.theta0_identity_error, e);
  s.inner_products = accepted.size();
  s.nonpositive_flagged = hyp.cc11 && hyp.cc22 && s.nonpositive > 0;
  if (!accepted.empty()) {
    std::sort(accepted.begin(), accepted.end());
    s.empirical = GammaPair{accepted.front(), accepted.back()};
    s.q01 = sorted_quantile(accepted, 0.01);
    s.q99 = sorted_quantile(accepted, 0.99);
  }
  if (s.empirical && s.analytic_gamma2_min && s.window_exit_fraction <= kMaxExclusionFraction)
    s.analytic_brackets = *s.analytic_gamma2_min <= s.empirical->gamma2_min &&
                          s.analytic_gamma2_max >= s.empirical->gamma2_max;
  return s;
}

// ---------------------------------------------------------------------------
// Envelope and tail checks.

struct EnvelopeViolation {
  double z = 0.0;
  double rho = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double se = 0.0;
  double margin = 0.0;  // distance outside the guarded band, > 0
};

struct EnvelopeReport {
  double region_lo = 0.0;
  double region_hi = 0.0;
  std::size_t tested = 0;
  std::size_t untested = 0;  // farther than 5 sigma from the mean
  std::vector<EnvelopeViolation> violations;
  bool consistent = true;  // lower <= upper on the whole grid
  bool pass() const { return violations.empty() && consistent && tested > 0; }
};

/// Checks lower - 3 SE <= rho <= upper + 3 SE at grid nodes inside
/// [region_lo, region_hi]. Nodes farther than 5 sigma from the mean are
/// recorded as untested.
inline EnvelopeReport envelope_check(const DensityEstimate& d, double m, double dbar,
                                     double sigma, const GammaPair& g, double region_lo,
                                     double region_hi) {
  if (!(g.gamma2_min > 0.0) || !(g.gamma2_max >= g.gamma2_min))
    throw InvalidArgument("envelope check requires 0 < gamma2_min <= gamma2_max");
  EnvelopeReport r;
  r.region_lo = region_lo;
  r.region_hi = region_hi;
  for (std::size_t j = 0; j < d.z.size(); ++j) {
    const double z = d.z[j];
    const double lo = lower_envelope(z, m, dbar, g);
    const double hi = upper_envelope(z, m, dbar, g);
    if (lo > hi * (1.0 + 1e-12)) r.consistent = false;
    if (z < region_lo || z > region_hi) continue;
    if (std::abs(z - m) > 5.0 * sigma) {
      ++r.untested;
      continue;
    }
    ++r.tested;
    const double band = 3.0 * d.se[j];
    if (d.rho[j] < lo - band)
      r.violations.push_back({z, d.rho[j], lo, hi, d.se[j], lo - band - d.rho[j]});
    else if (d.rho[j] > hi + band)
      r.violations.push_back({z, d.rho[j], lo, hi, d.se[j], d.rho[j] - hi - band});
  }
  return r;
}

struct TailSide {
  std::size_t examined = 0;
  std::size_t skipped_sparse = 0;  // rho below the reliability floor
  double worst_ratio = 0.0;        // largest rise over the running minimum
  bool pass = true;
};

struct TailReport {
  int p = 0;
  double q = 0.0;
  double center = 0.0;
  double upper_quantile = 0.0;
  double lower_quantile = 0.0;
  TailSide upper;
  TailSide lower;
  bool pass() const { return upper.pass && lower.pass; }
};

inline constexpr double kTailSlack = 0.10;
inline constexpr double kTailReliability = 10.0;

/// Walks outward from the (1+q)/2 and (1-q)/2 quantiles of rho_hat and
/// requires |z - mean|^p rho_hat(z) never to rise more than 10% above the
/// smallest value seen so far. Nodes whose estimate rests on fewer than about
/// `reliability` kernel contributions (rho < reliability / (n bw)) are skipped.
inline TailReport tail_check(const DensityEstimate& d, int p, double q,
                             double reliability = kTailReliability) {
  if (p < 0) throw InvalidArgument("tail exponent p must be >= 0");
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("tail quantile q must lie in (0, 1)");
  TailReport r;
  r.p = p;
  r.q = q;
  const double h = d.step();
  std::vector<double> cdf = quad::cumulative_trapezoid(d.rho, h);
  const double mass = cdf.back();
  if (!(mass > 0.0)) throw DegenerateSample("density estimate has zero mass");
  for (double& c : cdf) c /= mass;
  std::vector<double> zr(d.z.size());
  for (std::size_t j = 0; j < zr.size(); ++j) zr[j] = d.z[j] * d.rho[j];
  r.center = quad::trapezoid(zr, h) / mass;
  const double floor = reliability / (static_cast<double>(d.n) * d.bandwidth);
  const double hi_level = (1.0 + q) / 2.0, lo_level = (1.0 - q) / 2.0;

  auto walk = [&](TailSide& side, auto&& indices) {
    double running_min = INFINITY;
    for (std::size_t j : indices) {
      if (d.rho[j] < floor) {
        ++side.skipped_sparse;
        continue;
      }
      ++side.examined;
      const double v = std::pow(std::abs(d.z[j] - r.center), p) * d.rho[j];
      if (v > (1.0 + kTailSlack) * running_min) {
        side.pass = false;
        side.worst_ratio = std::max(side.worst_ratio, v / running_min);
      }
      running_min = std::min(running_min, v);
    }
  };
  std::vector<std::size_t> up, down;
  for (std::size_t j = 0; j < d.z.size(); ++j)
    if (cdf[j] >= hi_level) up.push_back(j);
  for (std::size_t j = d.z.size(); j-- > 0;)
    if (cdf[j] <= lo_level) down.push_back(j);
  r.upper_quantile = up.empty() ? d.z.back() : d.z[up.front()];
  r.lower_quantile = down.empty() ? d.z.front() : d.z[down.front()];
  walk(r.upper, up);
  walk(r.lower, down);
  return r;
}

/// Header "z,rho_hat,se,lower_env,upper_env"; envelopes are NaN when no
/// gamma pair is available.
inline void write_density_csv(std::ostream& os, const DensityEstimate& d, double m, double dbar,
                              const std::optional<GammaPair>& g) {
  const auto old = os.precision(17);
  os << "z,rho_hat,se,lower_env,upper_env\n";
  for (std::size_t j = 0; j < d.z.size(); ++j) {
    const double lo = g ? lower_envelope(d.z[j], m, dbar, *g) : kNaN;
    const double hi = g ? upper_envelope(d.z[j], m, dbar, *g) : kNaN;
    os << d.z[j] << ',' << d.rho[j] << ',' << d.se[j] << ',' << lo << ',' << hi << '\n';
  }
  os.precision(old);
}

}  // namespace scelab
