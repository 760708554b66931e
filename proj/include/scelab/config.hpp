#pragma once

// Run configuration: JSON schema, defaults, validation and echo.
//
// {
//   "scenario":   {"T": 1, "drift": {...}, "ic": {...},
//                  "window": {"x_lo": -2, "x_hi": 2, "n_scan": 401}},
//   "simulation": {"n_steps": 1000, "t_eval": [T], "x_eval": [0], "t0": 0.1},
//   "montecarlo": {"n_paths": 10000, "n_prime": 1000, "seed": 0,
//                  "theta_nodes": [0, 0.1, 0.5, 1, 2, 4],
//                  "second_order_paths": 100},
//   "kde":        {"bandwidth": "auto", "z_nodes": 512},
//   "checks":     {"tail_p": 4, "tail_q": 0.95, "envelope_sigmas": 2},
//   "outputs":    {"directory": "out", "formats": ["json", "csv"]}
// }
// drift: {"kind": "zero"|"linear"|"quadratic"|"logcosh"|"polynomial",
//         "rate", "offset", "curvature", "coefficients"}
// ic:    {"kind": "arctan_shift"|"exponential"|"affine",
//         "delta", "slope", "intercept"}

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "scelab/errors.hpp"
#include "scelab/paths.hpp"
#include "scelab/scenario.hpp"

namespace scelab {

using json = nlohmann::json;

struct SimulationConfig {
  int n_steps = 1000;
  std::vector<double> t_eval;  // defaults to {T}
  std::vector<double> x_eval{0.0};
  double t0 = 0.1;
};

struct MonteCarloConfig {
  std::uint64_t n_paths = 10000;
  std::uint64_t n_prime = 1000;
  std::uint64_t seed = 0;
  std::vector<double> theta_nodes{0.0, 0.1, 0.5, 1.0, 2.0, 4.0};
  std::uint64_t second_order_paths = 100;
};

struct KdeConfig {
  std::optional<double> bandwidth;  // nullopt: "auto"
  int z_nodes = 512;
};

struct ChecksConfig {
  int tail_p = 4;
  double tail_q = 0.95;
  double envelope_sigmas = 2.0;
};

struct OutputsConfig {
  std::string directory = "out";
  std::vector<std::string> formats{"json", "csv"};

  bool csv() const {
    for (const auto& f : formats)
      if (f == "csv") return true;
    return false;
  }
};

struct RunConfig {
  Scenario scenario;
  SimulationConfig simulation;
  MonteCarloConfig montecarlo;
  KdeConfig kde;
  ChecksConfig checks;
  OutputsConfig outputs;

  TimeGrid grid() const { return TimeGrid(scenario.horizon, simulation.n_steps); }
};

enum class Subcommand { check, simulate, density, sandwich, all };

inline std::string to_string(Subcommand s) {
  switch (s) {
    case Subcommand::check: return "check";
    case Subcommand::simulate: return "simulate";
    case Subcommand::density: return "density";
    case Subcommand::sandwich: return "sandwich";
    case Subcommand::all: return "all";
  }
  return "unknown";
}

namespace detail {

class ConfigReader {
 public:
  std::vector<std::string> errors;

  /// Returns the object at obj[key] (or an empty object) and flags unknown
  /// members against `allowed`.
  const json* section(const json& obj, const std::string& key, const std::string& path,
                      const std::set<std::string>& allowed) {
    if (!obj.contains(key)) return nullptr;
    const json& s = obj.at(key);
    if (!s.is_object()) {
      errors.push_back(path + " must be an object");
      return nullptr;
    }
    unknown(s, path, allowed);
    return &s;
  }

  void unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key()))
        errors.push_back("unknown field " + (path.empty() ? "" : path + ".") + it.key());
  }

  void number(const json* obj, const char* key, const std::string& path, double& out) {
    if (!obj || !obj->contains(key)) return;
    const json& v = obj->at(key);
    if (!v.is_number()) {
      errors.push_back(path + "." + key + " must be a number");
      return;
    }
    out = v.get<double>();
  }

  template <class Int>
  void integer(const json* obj, const char* key, const std::string& path, Int& out) {
    if (!obj || !obj->contains(key)) return;
    const json& v = obj->at(key);
    if (!v.is_number_integer()) {
      errors.push_back(path + "." + key + " must be an integer");
      return;
    }
    if constexpr (std::is_unsigned_v<Int>) {
      if (v.is_number_unsigned()) {
        out = static_cast<Int>(v.get<std::uint64_t>());
      } else {
        errors.push_back(path + "." + key + " must be >= 0");
      }
    } else {
      out = static_cast<Int>(v.get<std::int64_t>());
    }
  }

  void numbers(const json* obj, const char* key, const std::string& path,
               std::vector<double>& out) {
    if (!obj || !obj->contains(key)) return;
    const json& v = obj->at(key);
    if (!v.is_array()) {
      errors.push_back(path + "." + key + " must be an array of numbers");
      return;
    }
    std::vector<double> tmp;
    for (const auto& e : v) {
      if (!e.is_number()) {
        errors.push_back(path + "." + key + " must be an array of numbers");
        return;
      }
      tmp.push_back(e.get<double>());
    }
    out = std::move(tmp);
  }

  void string(const json* obj, const char* key, const std::string& path, std::string& out) {
    if (!obj || !obj->contains(key)) return;
    const json& v = obj->at(key);
    if (!v.is_string()) {
      errors.push_back(path + "." + key + " must be a string");
      return;
    }
    out = v.get<std::string>();
  }
};

inline std::optional<DriftKind> drift_kind(const std::string& s) {
  for (auto k : {DriftKind::zero, DriftKind::linear, DriftKind::quadratic, DriftKind::logcosh,
                 DriftKind::polynomial})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline std::optional<InitialKind> initial_kind(const std::string& s) {
  for (auto k : {InitialKind::arctan_shift, InitialKind::exponential, InitialKind::affine})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

}  // namespace detail

/// Parses and validates a configuration. Throws ConfigError listing every
/// problem found.
inline RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("malformed JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"configuration must be a JSON object"});

  detail::ConfigReader rd;
  RunConfig c;
  rd.unknown(root, "", {"scenario", "simulation", "montecarlo", "kde", "checks", "outputs"});

  const json* sc = rd.section(root, "scenario", "scenario", {"T", "drift", "ic", "window"});
  rd.number(sc, "T", "scenario", c.scenario.horizon);
  if (sc) {
    if (const json* d = rd.section(*sc, "drift", "scenario.drift",
                                   {"kind", "rate", "offset", "curvature", "coefficients"})) {
      std::string kind = "zero";
      rd.string(d, "kind", "scenario.drift", kind);
      if (auto k = detail::drift_kind(kind))
        c.scenario.drift.kind = *k;
      else
        rd.errors.push_back("scenario.drift.kind must be one of zero, linear, quadratic, "
                            "logcosh, polynomial (got \"" + kind + "\")");
      rd.number(d, "rate", "scenario.drift", c.scenario.drift.rate);
      rd.number(d, "offset", "scenario.drift", c.scenario.drift.offset);
      rd.number(d, "curvature", "scenario.drift", c.scenario.drift.curvature);
      rd.numbers(d, "coefficients", "scenario.drift", c.scenario.drift.coefficients);
    }
    if (const json* ic = rd.section(*sc, "ic", "scenario.ic",
                                    {"kind", "delta", "slope", "intercept"})) {
      std::string kind = "arctan_shift";
      rd.string(ic, "kind", "scenario.ic", kind);
      if (auto k = detail::initial_kind(kind))
        c.scenario.ic.kind = *k;
      else
        rd.errors.push_back("scenario.ic.kind must be one of arctan_shift, exponential, "
                            "affine (got \"" + kind + "\")");
      rd.number(ic, "delta", "scenario.ic", c.scenario.ic.delta);
      rd.number(ic, "slope", "scenario.ic", c.scenario.ic.slope);
      rd.number(ic, "intercept", "scenario.ic", c.scenario.ic.intercept);
    }
    if (const json* w = rd.section(*sc, "window", "scenario.window", {"x_lo", "x_hi", "n_scan"})) {
      rd.number(w, "x_lo", "scenario.window", c.scenario.window.x_lo);
      rd.number(w, "x_hi", "scenario.window", c.scenario.window.x_hi);
      rd.integer(w, "n_scan", "scenario.window", c.scenario.window.n_scan);
    }
  }

  const json* sim =
      rd.section(root, "simulation", "simulation", {"n_steps", "t_eval", "x_eval", "t0"});
  rd.integer(sim, "n_steps", "simulation", c.simulation.n_steps);
  rd.numbers(sim, "t_eval", "simulation", c.simulation.t_eval);
  rd.numbers(sim, "x_eval", "simulation", c.simulation.x_eval);
  rd.number(sim, "t0", "simulation", c.simulation.t0);
  if (!sim || !sim->contains("t_eval")) c.simulation.t_eval = {c.scenario.horizon};

  const json* mc = rd.section(root, "montecarlo", "montecarlo",
                              {"n_paths", "n_prime", "seed", "theta_nodes", "second_order_paths"});
  rd.integer(mc, "n_paths", "montecarlo", c.montecarlo.n_paths);
  rd.integer(mc, "n_prime", "montecarlo", c.montecarlo.n_prime);
  rd.integer(mc, "seed", "montecarlo", c.montecarlo.seed);
  rd.numbers(mc, "theta_nodes", "montecarlo", c.montecarlo.theta_nodes);
  rd.integer(mc, "second_order_paths", "montecarlo", c.montecarlo.second_order_paths);

  if (const json* k = rd.section(root, "kde", "kde", {"bandwidth", "z_nodes"})) {
    if (k->contains("bandwidth")) {
      const json& b = k->at("bandwidth");
      if (b.is_string() && b.get<std::string>() == "auto") {
        c.kde.bandwidth.reset();
      } else if (b.is_number() && b.get<double>() > 0.0) {
        c.kde.bandwidth = b.get<double>();
      } else {
        rd.errors.push_back("kde.bandwidth must be \"auto\" or a positive number (got " +
                            b.dump() + ")");
      }
    }
    rd.integer(k, "z_nodes", "kde", c.kde.z_nodes);
  }

  const json* ch = rd.section(root, "checks", "checks", {"tail_p", "tail_q", "envelope_sigmas"});
  rd.integer(ch, "tail_p", "checks", c.checks.tail_p);
  rd.number(ch, "tail_q", "checks", c.checks.tail_q);
  rd.number(ch, "envelope_sigmas", "checks", c.checks.envelope_sigmas);

  if (const json* o = rd.section(root, "outputs", "outputs", {"directory", "formats"})) {
    rd.string(o, "directory", "outputs", c.outputs.directory);
    if (o->contains("formats")) {
      const json& f = o->at("formats");
      bool ok = f.is_array();
      std::vector<std::string> formats;
      if (ok)
        for (const auto& e : f) {
          if (!e.is_string() || (e != "json" && e != "csv")) {
            ok = false;
            break;
          }
          formats.push_back(e.get<std::string>());
        }
      if (ok)
        c.outputs.formats = std::move(formats);
      else
        rd.errors.push_back("outputs.formats must be an array drawn from \"json\", \"csv\"");
    }
  }

  // Constraints.
  auto& e = rd.errors;
  const double T = c.scenario.horizon;
  if (!(T > 0.0) || !std::isfinite(T)) e.push_back("scenario.T must be > 0");
  if (!(c.scenario.window.x_lo < c.scenario.window.x_hi))
    e.push_back("scenario.window requires x_lo < x_hi");
  if (c.scenario.window.n_scan < 2) e.push_back("scenario.window.n_scan must be >= 2");
  if (c.scenario.drift.kind == DriftKind::polynomial && c.scenario.drift.coefficients.empty())
    e.push_back("scenario.drift.coefficients must be non-empty for a polynomial drift");
  if (c.simulation.n_steps < 10) e.push_back("simulation.n_steps must be >= 10");
  if (c.simulation.t_eval.empty()) e.push_back("simulation.t_eval must be non-empty");
  if (c.simulation.x_eval.empty()) e.push_back("simulation.x_eval must be non-empty");
  if (!(c.simulation.t0 > 0.0)) e.push_back("simulation.t0 must be > 0");
  for (double t : c.simulation.t_eval) {
    if (t > T) {
      e.push_back("t_eval must be ≤ T (got " + json(t).dump() + " with T = " + json(T).dump() +
                  ")");
    } else if (!(t > 0.0)) {
      e.push_back("t_eval entries must be > 0 (got " + json(t).dump() + ")");
    } else if (T > 0.0 && c.simulation.n_steps >= 1 &&
               !TimeGrid(T, c.simulation.n_steps).on_grid(t)) {
      e.push_back("t_eval entries must be grid nodes k*T/n_steps (got " + json(t).dump() + ")");
    }
  }
  for (double x : c.simulation.x_eval)
    if (!std::isfinite(x)) e.push_back("x_eval entries must be finite");
  if (c.montecarlo.n_paths < 1) e.push_back("montecarlo.n_paths must be >= 1");
  if (c.montecarlo.n_prime < 1) e.push_back("montecarlo.n_prime must be >= 1");
  if (c.montecarlo.theta_nodes.empty()) e.push_back("montecarlo.theta_nodes must be non-empty");
  for (double th : c.montecarlo.theta_nodes)
    if (!(th >= 0.0) || !std::isfinite(th)) {
      e.push_back("montecarlo.theta_nodes entries must be finite and >= 0");
      break;
    }
  if (c.kde.z_nodes < 2) e.push_back("kde.z_nodes must be >= 2");
  if (c.checks.tail_p < 0) e.push_back("checks.tail_p must be >= 0");
  if (!(c.checks.tail_q > 0.0 && c.checks.tail_q < 1.0))
    e.push_back("checks.tail_q must lie in (0, 1)");
  if (!(c.checks.envelope_sigmas > 0.0)) e.push_back("checks.envelope_sigmas must be > 0");
  if (c.outputs.directory.empty()) e.push_back("outputs.directory must be non-empty");

  if (!e.empty()) throw ConfigError(std::move(e));
  return c;
}

/// Constraints that depend on which stages run.
inline void validate_for(const RunConfig& c, Subcommand sub) {
  std::vector<std::string> e;
  if (sub == Subcommand::sandwich || sub == Subcommand::all) {
    for (double t : c.simulation.t_eval)
      if (t < c.simulation.t0)
        e.push_back("sandwich runs require every t_eval ≥ t0 (Gaussian bounds hold on [t0, T]); "
                    "got t = " + json(t).dump() + " with t0 = " + json(c.simulation.t0).dump());
  }
  if (!e.empty()) throw ConfigError(std::move(e));
}

/// Effective configuration with every default filled in; parse_config of
/// its dump reproduces `c`.
inline json to_json(const RunConfig& c) {
  json drift = {{"kind", to_string(c.scenario.drift.kind)},
                {"rate", c.scenario.drift.rate},
                {"offset", c.scenario.drift.offset},
                {"curvature", c.scenario.drift.curvature},
                {"coefficients", c.scenario.drift.coefficients}};
  json ic = {{"kind", to_string(c.scenario.ic.kind)},
             {"delta", c.scenario.ic.delta},
             {"slope", c.scenario.ic.slope},
             {"intercept", c.scenario.ic.intercept}};
  json window = {{"x_lo", c.scenario.window.x_lo},
                 {"x_hi", c.scenario.window.x_hi},
                 {"n_scan", c.scenario.window.n_scan}};
  json bandwidth = c.kde.bandwidth ? json(*c.kde.bandwidth) : json("auto");
  return {
      {"scenario", {{"T", c.scenario.horizon}, {"drift", drift}, {"ic", ic}, {"window", window}}},
      {"simulation",
       {{"n_steps", c.simulation.n_steps},
        {"t_eval", c.simulation.t_eval},
        {"x_eval", c.simulation.x_eval},
        {"t0", c.simulation.t0}}},
      {"montecarlo",
       {{"n_paths", c.montecarlo.n_paths},
        {"n_prime", c.montecarlo.n_prime},
        {"seed", c.montecarlo.seed},
        {"theta_nodes", c.montecarlo.theta_nodes},
        {"second_order_paths", c.montecarlo.second_order_paths}}},
      {"kde", {{"bandwidth", bandwidth}, {"z_nodes", c.kde.z_nodes}}},
      {"checks",
       {{"tail_p", c.checks.tail_p},
        {"tail_q", c.checks.tail_q},
        {"envelope_sigmas", c.checks.envelope_sigmas}}},
      {"outputs", {{"directory", c.outputs.directory}, {"formats", c.outputs.formats}}}};
}

}  // namespace scelab
