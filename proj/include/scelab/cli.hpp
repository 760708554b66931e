#pragma once

// Orchestration behind the command-line tool:
//   scelab <check|simulate|density|sandwich|all> --config PATH
//          [--seed N] [--threads N] [--out DIR]
// Exit codes: 0 every verdict passes, 1 some verdict fails, 2 configuration
// error, 3 divergent paths beyond 1%.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scelab/config.hpp"
#include "scelab/density.hpp"
#include "scelab/errors.hpp"
#include "scelab/flow.hpp"
#include "scelab/malliavin.hpp"
#include "scelab/parallel.hpp"
#include "scelab/paths.hpp"
#include "scelab/scenario.hpp"

namespace scelab {

enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitConfig = 2, kExitDivergence = 3 };

struct RunOptions {
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

struct RunOutcome {
  json report;
  int exit_code = kExitPass;
  std::filesystem::path directory;
};

namespace detail {

/// JSON number, with non-finite values written as null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

inline json opt_bool(const std::optional<bool>& v) { return v ? json(*v) : json(nullptr); }

class Verdicts {
 public:
  void add(const std::string& name, std::optional<std::size_t> anchor, Verdict v,
           const std::string& reason) {
    json j = {{"name", name}, {"verdict", to_string(v)}, {"reason", reason}};
    j["anchor"] = anchor ? json(*anchor) : json(nullptr);
    list_.push_back(std::move(j));
    if (v == Verdict::fail) failed_ = true;
  }
  void pass_if(const std::string& name, std::optional<std::size_t> anchor, bool ok,
               const std::string& reason) {
    add(name, anchor, ok ? Verdict::pass : Verdict::fail, reason);
  }
  const json& list() const { return list_; }
  bool failed() const { return failed_; }

 private:
  json list_ = json::array();
  bool failed_ = false;
};

inline json hypotheses_json(const HypothesisReport& h) {
  auto verdict = [](bool holds, const std::string& what) {
    return json{{"verdict", holds ? "pass" : "fail"}, {"reason", what}};
  };
  return {
      {"window", {{"x_lo", h.window.x_lo}, {"x_hi", h.window.x_hi}, {"n_scan", h.window.n_scan}}},
      {"cc1", verdict(h.cc1, "b'' <= 0 on the window")},
      {"cc11", verdict(h.cc11, "b'' <= -C < 0 on the window")},
      {"cc2", verdict(h.cc2, "u0 > 0 and u0' > 0 on the window")},
      {"cc22", verdict(h.cc22, "u0 >= C > 0 and u0' > 0 on the window")},
      {"cc11_constant", num(h.cc11_constant)},
      {"cc22_constant", num(h.cc22_constant)},
      {"cc1_violations", h.cc1_violations.size()},
      {"cc2_violations", h.cc2_violations.size()},
      {"norms",
       {{"drift_d1", h.norms.drift_d1},
        {"drift_d2", h.norms.drift_d2},
        {"drift_d3", h.norms.drift_d3},
        {"ic_d0", h.norms.ic_d0},
        {"ic_d1", h.norms.ic_d1},
        {"ic_d2", h.norms.ic_d2}}},
      {"holder_regularity_assumed", h.holder_regularity_assumed},
      {"interpretation", h.interpretation}};
}

inline json constants_json(const BoundConstants& k) {
  return {{"T", k.horizon}, {"t", k.t},         {"C1", k.c1},
          {"C2", k.c2},     {"C3", k.c3},       {"C4", k.c4},
          {"d2JY_bound", k.d2jy_bound},         {"C5", opt_num(k.c5)},
          {"C5_joint", opt_num(k.c5_joint)}};
}

inline json tally_json(const CheckTally& t) {
  return {{"name", t.name},
          {"pass", t.pass},
          {"fail", t.fail},
          {"not_applicable", t.not_applicable},
          {"observed_min", num(t.observed_min)},
          {"observed_max", num(t.observed_max)},
          {"bound", num(t.bound)},
          {"first_failure", t.first_failure >= 0 ? json(t.first_failure) : json(nullptr)},
          {"reason", t.reason}};
}

inline json gamma_json(const std::optional<GammaPair>& g) {
  if (!g) return nullptr;
  return {{"gamma2_min", num(g->gamma2_min)}, {"gamma2_max", num(g->gamma2_max)}};
}

inline json envelope_json(const EnvelopeReport& r) {
  json v = json::array();
  for (const auto& x : r.violations)
    v.push_back({{"z", x.z},
                 {"rho_hat", x.rho},
                 {"lower", x.lower},
                 {"upper", x.upper},
                 {"se", x.se},
                 {"margin", x.margin}});
  return {{"region", {r.region_lo, r.region_hi}},
          {"tested", r.tested},
          {"untested", r.untested},
          {"consistent", r.consistent},
          {"violations", v}};
}

inline json tail_json(const TailReport& r) {
  auto side = [](const TailSide& s) {
    return json{{"examined", s.examined},
                {"skipped_sparse", s.skipped_sparse},
                {"worst_ratio", s.worst_ratio},
                {"pass", s.pass}};
  };
  return {{"p", r.p},
          {"q", r.q},
          {"center", r.center},
          {"upper_quantile", r.upper_quantile},
          {"lower_quantile", r.lower_quantile},
          {"upper", side(r.upper)},
          {"lower", side(r.lower)}};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  os << text;
}

template <class Fn>
void write_file(const std::filesystem::path& p, Fn&& fn) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  fn(os);
}

inline bool at_least(Subcommand s, Subcommand stage) {
  return static_cast<int>(s) >= static_cast<int>(stage);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

/// Runs the stages selected by `sub` for every (t, x) anchor and writes the
/// artifacts. Throws ConfigError for stage-dependent configuration problems.
inline RunOutcome run(const RunConfig& base, Subcommand sub, const RunOptions& ropt) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  RunConfig cfg = base;
  if (ropt.seed) cfg.montecarlo.seed = *ropt.seed;
  if (ropt.out) cfg.outputs.directory = *ropt.out;
  validate_for(cfg, sub);

  namespace fs = std::filesystem;
  RunOutcome outcome;
  outcome.directory = cfg.outputs.directory;
  fs::create_directories(outcome.directory);

  const Scenario& sc = cfg.scenario;
  const TimeGrid grid = cfg.grid();
  const HypothesisReport hyp = check_hypotheses(sc.drift, sc.ic, sc.window, sc.horizon);
  detail::Verdicts verdicts;
  json anchors = json::array();
  json timings = {{"anchors", json::array()}};
  bool divergence_exceeded = false;
  const bool csv = cfg.outputs.csv();

  std::vector<std::pair<double, double>> points;
  for (double t : cfg.simulation.t_eval)
    for (double x : cfg.simulation.x_eval) points.emplace_back(t, x);

  for (std::size_t ai = 0; ai < points.size(); ++ai) {
    const auto [t, x] = points[ai];
    const fs::path dir =
        points.size() == 1 ? outcome.directory : outcome.directory / ("anchor_" + std::to_string(ai));
    fs::create_directories(dir);
    json anchor = {{"index", ai}, {"t", t}, {"x", x}};
    json timing = json::object();
    auto seconds_since = [](clock::time_point s) {
      return std::chrono::duration<double>(clock::now() - s).count();
    };

    const BoundConstants k = constants(hyp, sc.horizon, t);
    anchor["constants"] = detail::constants_json(k);
    if (sub == Subcommand::check) {
      anchors.push_back(std::move(anchor));
      timings["anchors"].push_back(std::move(timing));
      continue;
    }

    // Monte Carlo with per-path Malliavin audit.
    auto ts = clock::now();
    SamplingOptions so;
    so.n = cfg.montecarlo.n_paths;
    so.seed = cfg.montecarlo.seed;
    so.threads = ropt.threads;
    so.second_order_paths = cfg.montecarlo.second_order_paths;
    const SampleSet set = sample_solution(sc, grid, t, x, so);
    timing["sampling"] = seconds_since(ts);

    const double n = static_cast<double>(set.size());
    const double divergent_fraction = static_cast<double>(set.divergent_count()) / n;
    anchor["sampling"] = {{"n_paths", set.size()},
                          {"divergent", set.divergent_count()},
                          {"window_exits", set.window_exit_count()},
                          {"excluded_fraction", set.exclusion_fraction()}};
    if (divergent_fraction > kMaxExclusionFraction) divergence_exceeded = true;
    verdicts.pass_if("divergence_within_tolerance", ai, divergent_fraction <= kMaxExclusionFraction,
                     "divergent fraction " + detail::fmt(divergent_fraction) + " <= 0.01");
    verdicts.pass_if("exclusions_within_tolerance", ai,
                     set.exclusion_fraction() <= kMaxExclusionFraction,
                     "divergent plus out-of-window fraction " +
                         detail::fmt(set.exclusion_fraction()) + " <= 0.01");

    json audit = json::array();
    for (const auto& c : set.audit.checks) {
      audit.push_back(detail::tally_json(c));
      Verdict v = Verdict::not_applicable;
      if (c.fail > 0)
        v = Verdict::fail;
      else if (c.pass > 0)
        v = Verdict::pass;
      verdicts.add("malliavin." + c.name, ai, v,
                   c.reason.empty() ? "not applicable on every path" : c.reason);
    }
    anchor["malliavin_audit"] = {
        {"paths_audited", set.audit.paths},
        {"checks", audit},
        {"djy_lower_bound_readings",
         {{"as_printed",
           {{"formula", "C t exp(|b'| t) exp(-|b'| a)"},
            {"holds", set.audit.djy_lower_as_printed.holds},
            {"fails", set.audit.djy_lower_as_printed.fails}}},
          {"derived",
           {{"formula", "C a exp(-|b'| t) exp(-|b'| a)"},
            {"holds", set.audit.djy_lower_derived.holds},
            {"fails", set.audit.djy_lower_derived.fails}}}}}};
    if (csv) detail::write_file(dir / "samples.csv", [&](std::ostream& os) { write_samples_csv(os, set); });

    if (sub == Subcommand::all) {
      const BrownianPath path0 = sample_path(grid, cfg.montecarlo.seed, 0);
      detail::write_file(dir / "path.csv", [&](std::ostream& os) { write_path_csv(os, path0); });
      try {
        const BackwardTrajectory traj = solve_backward(sc.drift, path0, 0.0, t, x);
        detail::write_file(dir / "trajectory.csv",
                           [&](std::ostream& os) { write_trajectory_csv(os, traj, 'Y'); });
        detail::write_file(dir / "profile.csv", [&](std::ostream& os) {
          write_profile_csv(os, du_profile(sc.drift, sc.ic, traj));
        });
      } catch (const DivergenceError&) {
      }
    }

    if (!detail::at_least(sub, Subcommand::density)) {
      anchors.push_back(std::move(anchor));
      timings["anchors"].push_back(std::move(timing));
      continue;
    }

    // Density, Bouleau-Hirsch, tail.
    ts = clock::now();
    const BouleauHirschReport bh = bouleau_hirsch_check(set, hyp, k);
    anchor["bouleau_hirsch"] = {{"valid", bh.valid},
                                {"min_du_norm_sq", detail::num(bh.min_du_norm_sq)},
                                {"argmin", bh.argmin >= 0 ? json(bh.argmin) : json(nullptr)},
                                {"nonpositive", bh.nonpositive},
                                {"C5", detail::opt_num(bh.c5)},
                                {"min_in_window", detail::opt_num(bh.min_in_window)},
                                {"c5_violations", bh.c5_violations}};
    verdicts.pass_if("bouleau_hirsch_positive", ai, bh.positive,
                     "min ||Du||^2 over valid samples > 0");
    if (bh.c5_holds)
      verdicts.pass_if("bouleau_hirsch_c5", ai, *bh.c5_holds,
                       "min ||Du||^2 over in-window samples >= C5(t)");
    else
      verdicts.add("bouleau_hirsch_c5", ai, Verdict::not_applicable,
                   "needs cc11 and cc22 on the window and at least one in-window sample");

    const std::vector<double> values = set.included_values();
    std::optional<DensityEstimate> dens;
    SandwichBounds sw;
    bool have_sandwich = false;
    try {
      KdeOptions ko;
      ko.bandwidth = cfg.kde.bandwidth;
      ko.nodes = cfg.kde.z_nodes;
      if (values.empty()) throw DegenerateSample("no sample survived exclusion");
      dens = kde(values, ko);
    } catch (const Error& e) {
      verdicts.add("kde_mass", ai, Verdict::fail, std::string("density estimate failed: ") + e.what());
    }
    if (dens) {
      const double mass = dens->mass();
      anchor["density"] = {{"n", dens->n},
                           {"bandwidth", dens->bandwidth},
                           {"bandwidth_rule", cfg.kde.bandwidth ? "fixed" : "silverman"},
                           {"mass", mass},
                           {"mean", detail::num(dens->sample_mean)},
                           {"sd", detail::num(dens->sample_sd)},
                           {"z_range", {dens->z.front(), dens->z.back()}}};
      verdicts.pass_if("kde_mass", ai, mass >= 0.98 && mass <= 1.001,
                       "trapezoidal mass " + detail::fmt(mass) + " in [0.98, 1.001]");
      const TailReport tr = tail_check(*dens, cfg.checks.tail_p, cfg.checks.tail_q);
      anchor["tail"] = detail::tail_json(tr);
      verdicts.pass_if("tail_decay", ai, tr.pass(),
                       "|z - m|^p rho_hat(z) non-increasing (10% slack) beyond the q-quantiles");
    }
    timing["density"] = seconds_since(ts);

    if (detail::at_least(sub, Subcommand::sandwich)) {
      ts = clock::now();
      SandwichParams sp;
      sp.n_prime = cfg.montecarlo.n_prime;
      sp.theta_nodes = cfg.montecarlo.theta_nodes;
      sp.t0 = cfg.simulation.t0;
      sp.threads = ropt.threads;
      sw = sandwich(sc, grid, set, sp);
      have_sandwich = true;
      json s = {{"m_hat", detail::num(sw.m_hat)},
                {"d_hat", detail::num(sw.d_hat)},
                {"sigma_hat", detail::num(sw.sigma_hat)},
                {"empirical", detail::gamma_json(sw.empirical)},
                {"q01", detail::num(sw.q01)},
                {"q99", detail::num(sw.q99)},
                {"analytic",
                 {{"gamma2_min", detail::opt_num(sw.analytic_gamma2_min)},
                  {"gamma2_max", detail::num(sw.analytic_gamma2_max)}}},
                {"theta_nodes", sw.theta_nodes},
                {"n_prime", sw.n_prime},
                {"inner_products", sw.inner_products},
                {"pairs_out_of_window", sw.pairs_out_of_window},
                {"pairs_divergent", sw.pairs_divergent},
                {"nonpositive", sw.nonpositive},
                {"theta0_identity_error", sw.theta0_identity_error},
                {"analytic_brackets_empirical", detail::opt_bool(sw.analytic_brackets)}};
      anchor["sandwich"] = std::move(s);

      if (hyp.cc11 && hyp.cc22)
        verdicts.pass_if("sandwich_inner_products_positive", ai, !sw.nonpositive_flagged,
                         "<Du, Du~> > 0 for every in-window pair under cc11 and cc22");
      else
        verdicts.add("sandwich_inner_products_positive", ai, Verdict::not_applicable,
                     "needs cc11 and cc22 on the window");
      verdicts.pass_if("theta0_identity", ai, sw.theta0_identity_error == 0.0,
                       "theta = 0 reproduces ||Du||^2 exactly");
      if (sw.analytic_brackets)
        verdicts.pass_if("analytic_brackets_empirical", ai, *sw.analytic_brackets,
                         "analytic gamma2_min <= empirical min and analytic gamma2_max >= "
                         "empirical max");
      else
        verdicts.add("analytic_brackets_empirical", ai, Verdict::not_applicable,
                     "needs cc11, cc22, in-window pairs and exclusions <= 1%");

      json env = json::object();
      if (dens && sw.empirical && sw.empirical->gamma2_min > 0.0) {
        const double half = cfg.checks.envelope_sigmas * sw.sigma_hat;
        const EnvelopeReport er = envelope_check(*dens, sw.m_hat, sw.d_hat, sw.sigma_hat,
                                                 *sw.empirical, sw.m_hat - half, sw.m_hat + half);
        env["empirical"] = detail::envelope_json(er);
        verdicts.pass_if("envelope_empirical", ai, er.pass(),
                         "lower - 3 SE <= rho_hat <= upper + 3 SE on m +- k sigma with empirical "
                         "gammas");
        verdicts.pass_if("envelope_consistency", ai, er.consistent,
                         "lower envelope <= upper envelope on the grid");
      } else {
        verdicts.add("envelope_empirical", ai, Verdict::not_applicable,
                     "needs a density and positive empirical gammas");
        verdicts.add("envelope_consistency", ai, Verdict::not_applicable,
                     "needs a density and positive empirical gammas");
      }
      const auto analytic = sw.analytic();
      if (dens && analytic && set.exclusion_fraction() <= kMaxExclusionFraction) {
        const double half = cfg.checks.envelope_sigmas * sw.sigma_hat;
        const EnvelopeReport er = envelope_check(*dens, sw.m_hat, sw.d_hat, sw.sigma_hat,
                                                 *analytic, sw.m_hat - half, sw.m_hat + half);
        env["analytic"] = detail::envelope_json(er);
        verdicts.pass_if("envelope_analytic", ai, er.pass(),
                         "lower - 3 SE <= rho_hat <= upper + 3 SE with analytic gammas");
      } else {
        verdicts.add("envelope_analytic", ai, Verdict::not_applicable,
                     "needs cc11, cc22 and exclusions <= 1%");
      }
      anchor["envelope"] = std::move(env);
      timing["sandwich"] = seconds_since(ts);
    }
    if (dens && csv)
      detail::write_file(dir / "density.csv", [&](std::ostream& os) {
        write_density_csv(os, *dens, sw.m_hat, sw.d_hat,
                          have_sandwich ? sw.empirical : std::optional<GammaPair>{});
      });
    anchors.push_back(std::move(anchor));
    timings["anchors"].push_back(std::move(timing));
  }

  outcome.exit_code = divergence_exceeded ? kExitDivergence
                      : verdicts.failed() ? kExitFail
                                          : kExitPass;
  timings["total"] = std::chrono::duration<double>(clock::now() - t_start).count();
  json& r = outcome.report;
  r["tool"] = "scelab";
  r["subcommand"] = to_string(sub);
  r["seed"] = cfg.montecarlo.seed;
  r["config"] = to_json(cfg);
  r["hypotheses"] = detail::hypotheses_json(hyp);
  r["anchors"] = std::move(anchors);
  r["verdicts"] = verdicts.list();
  r["overall"] = verdicts.failed() ? "fail" : "pass";
  r["exit_code"] = outcome.exit_code;
  r["timings"] = std::move(timings);
  detail::write_text(outcome.directory / "report.json", r.dump(2) + "\n");
  return outcome;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError({"cannot read configuration file " + path});
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Entry point of the command-line tool.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Monte Carlo audit of Malliavin bounds and density estimates for the 1-d "
               "stochastic continuity equation"};
  app.require_subcommand(1);
  struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    unsigned threads = default_threads();
    std::optional<std::string> out;
  } flags;
  const std::vector<std::pair<Subcommand, std::string>> subs{
      {Subcommand::check, "hypotheses and constants only"},
      {Subcommand::simulate, "adds flow simulation and the Malliavin audit"},
      {Subcommand::density, "adds the density estimate, Bouleau-Hirsch and tail checks"},
      {Subcommand::sandwich, "adds the Gaussian sandwich and envelope checks"},
      {Subcommand::all, "everything, plus debug dumps of path 0"}};
  std::vector<CLI::App*> handles;
  for (const auto& [s, help] : subs) {
    CLI::App* a = app.add_subcommand(to_string(s), help);
    a->add_option("--config", flags.config, "configuration JSON")->required();
    a->add_option("--seed", flags.seed, "override montecarlo.seed");
    a->add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
    a->add_option("--out", flags.out, "override outputs.directory");
    handles.push_back(a);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitConfig;
  }
  Subcommand sub = Subcommand::check;
  for (std::size_t i = 0; i < handles.size(); ++i)
    if (handles[i]->parsed()) sub = subs[i].first;

  try {
    const RunConfig cfg = parse_config(read_file(flags.config));
    RunOptions ro;
    ro.threads = flags.threads;
    ro.seed = flags.seed;
    ro.out = flags.out;
    const RunOutcome o = run(cfg, sub, ro);
    out << "report: " << (o.directory / "report.json").string() << "\n"
        << "overall: " << o.report["overall"].get<std::string>() << "\n";
    for (const auto& v : o.report["verdicts"])
      if (v["verdict"] == "fail")
        out << "FAIL " << v["name"].get<std::string>()
            << (v["anchor"].is_null() ? std::string()
                                      : " [anchor " + v["anchor"].dump() + "]")
            << ": " << v["reason"].get<std::string>() << "\n";
    return o.exit_code;
  } catch (const ConfigError& e) {
    err << "configuration error:\n";
    for (const auto& p : e.problems()) err << "  " << p << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  }
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace scelab
