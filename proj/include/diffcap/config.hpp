#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffcap/attack.hpp"
#include "diffcap/calibrate.hpp"
#include "diffcap/purify.hpp"
#include "diffcap/schedule.hpp"
#include "diffcap/sde.hpp"

namespace diffcap {

/// Every knob of an experiment. Loaded from a flat text file of `dotted.key = <JSON value>`
/// lines; `#` starts a comment outside of strings. Unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 20251017;
  std::string output_dir = "diffcap_out";

  LinearSchedule schedule;

  struct Gmm {
    int dim = 16;
    std::vector<double> weights{0.5, 0.5};
    // Each entry has length dim, or length 1 (broadcast).
    std::vector<std::vector<double>> means{{0.5}, {-0.5}};
    std::vector<std::vector<double>> vars{{0.01}, {0.01}};
  } gmm;

  struct Data {
    int n_per_class = 100;
  } data;

  struct EncoderSpec {
    std::string kind = "linear";
    std::uint64_t seed = 7;
    int m = 8;
    int hidden = 32;
  } encoder;

  struct Attack {
    std::vector<double> eps{0.2, 0.4};
    int steps = 20;
    double step_size = 0.05;
    double temperature = 0.1;
    bool random_start = false;
  } attack;

  struct Adaptive {
    bool enabled = true;
    std::string mode = "bpda+eot";
    int eot_samples = 3;
    int steps = 50;
    int n_points = 100;
  } adaptive;

  PurifyConfig purify{0.96, 100, 0.0, InjectionMode::kShared, ReverseConfig{100, ReverseMode::kStochastic}};
  bool use_calibrated_tau = true;

  double baseline_t = 0.075;

  struct Calibrate {
    bool enabled = true;
    int n_pairs = 100;
    double alpha = 0.05;
    std::string test = "ks";
  } calibrate;

  struct Certify {
    int n_points = 5;
    std::vector<double> t_grid{0.05, 0.1, 0.2};
    std::uint64_t n_mc = 2000;
    double confidence = 0.999;
  } certify;

  struct Theory {
    double delta = 0.01;
    std::vector<double> t_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::uint64_t n_mc = 1000;
    std::uint64_t lipschitz_pairs = 10000;
    std::size_t monitor_resolution = 10000;
    double convergence_ceiling = 0.05;
  } theory;

  struct Report {
    bool include_timings = false;
  } report;

  /// Largest attack budget; the one used for calibration, adaptive attacks and certificates.
  double primary_eps() const {
    double e = 0.0;
    for (double v : attack.eps) e = std::max(e, v);
    return e;
  }

  GmmDistribution build_gmm() const {
    const auto expand = [&](const std::vector<double>& v, const char* what) {
      if (v.size() == 1) return Vector(Vector::Constant(gmm.dim, v[0]));
      if (static_cast<int>(v.size()) != gmm.dim)
        throw ConfigError(std::string("gmm.") + what + ": entry length must be 1 or gmm.dim");
      return Vector(Eigen::Map<const Vector>(v.data(), gmm.dim));
    };
    if (gmm.dim < 1) throw ConfigError("gmm.dim must be >= 1");
    if (gmm.means.size() != gmm.weights.size() || gmm.vars.size() != gmm.weights.size())
      throw ConfigError("gmm.weights, gmm.means and gmm.vars must have the same length");
    std::vector<Vector> means, vars;
    for (const auto& m : gmm.means) means.push_back(expand(m, "means"));
    for (const auto& v : gmm.vars) vars.push_back(expand(v, "vars"));
    try {
      return GmmDistribution(gmm.weights, std::move(means), std::move(vars));
    } catch (const Error& e) {
      throw ConfigError(std::string("gmm: ") + e.what());
    }
  }

  AttackConfig attack_config(double eps) const {
    return AttackConfig{eps, attack.step_size, attack.steps, attack.temperature, attack.random_start};
  }

  void validate() const {
    try {
      build_gmm();
      if (data.n_per_class < 1) throw ConfigError("data.n_per_class must be >= 1");
      if (encoder.kind != "linear" && encoder.kind != "mlp") throw ConfigError("encoder.kind must be linear|mlp");
      if (encoder.m < 2) throw ConfigError("encoder.m must be >= 2");
      if (encoder.hidden < 1) throw ConfigError("encoder.hidden must be >= 1");
      if (attack.eps.empty()) throw ConfigError("attack.eps must list at least one budget");
      for (double e : attack.eps) attack_config(e).validate();
      if (adaptive.mode != "bpda" && adaptive.mode != "bpda+eot") throw ConfigError("adaptive.mode must be bpda|bpda+eot");
      if (adaptive.eot_samples < 1 || adaptive.steps < 1 || adaptive.n_points < 1)
        throw ConfigError("adaptive.eot_samples, adaptive.steps and adaptive.n_points must be >= 1");
      purify.validate();
      if (!(baseline_t > 0.0 && baseline_t <= 1.0)) throw ConfigError("baseline.t_fixed must lie in (0,1]");
      if (calibrate.n_pairs < 1) throw ConfigError("calibrate.n_pairs must be >= 1");
      if (!(calibrate.alpha > 0.0 && calibrate.alpha < 1.0)) throw ConfigError("calibrate.alpha must lie in (0,1)");
      parse_test(calibrate.test);
      if (certify.n_points < 0) throw ConfigError("certify.n_points must be >= 0");
      if (certify.n_mc < 100) throw ConfigError("certify.n_mc must be >= 100");
      if (certify.t_grid.empty()) throw ConfigError("certify.t_grid must not be empty");
      for (double t : certify.t_grid)
        if (!(t > 0.0 && t <= 1.0)) throw ConfigError("certify.t_grid entries must lie in (0,1]");
      if (!(certify.confidence > 0.0 && certify.confidence < 1.0)) throw ConfigError("certify.confidence in (0,1)");
      for (double t : theory.t_grid)
        if (!(t > 0.0 && t + theory.delta <= 1.0 + 1e-12)) throw ConfigError("theory.t_grid: need 0 < t <= 1 - delta");
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }

  /// Applies one `key = value` assignment.
  void set(const std::string& key, const nlohmann::json& v);

  /// Echo for reports. output_dir is left out so the echo depends only on the experiment.
  nlohmann::ordered_json to_json() const;
};

namespace detail {

template <class T>
T config_get(const std::string& key, const nlohmann::json& v) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': wrong value type (" + v.dump() + ")");
  }
}

inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (c == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const nlohmann::json& v) {
  using detail::config_get;
  auto vec = [&](const std::string& k) {
    if (!v.is_array()) throw ConfigError("config key '" + k + "': expected a list");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(config_get<double>(k, e));
    return out;
  };
  auto nested = [&](const std::string& k) {
    if (!v.is_array()) throw ConfigError("config key '" + k + "': expected a list of lists");
    std::vector<std::vector<double>> out;
    for (const auto& row : v) {
      if (!row.is_array()) throw ConfigError("config key '" + k + "': expected a list of lists");
      std::vector<double> r;
      for (const auto& e : row) r.push_back(config_get<double>(k, e));
      out.push_back(std::move(r));
    }
    return out;
  };

  if (key == "seed") seed = config_get<std::uint64_t>(key, v);
  else if (key == "output_dir") output_dir = config_get<std::string>(key, v);
  else if (key == "schedule.beta_min" || key == "schedule.beta_max") {
    const double x = config_get<double>(key, v);
    try {
      schedule = key == "schedule.beta_min" ? LinearSchedule(x, std::max(x, schedule.beta_max()))
                                            : LinearSchedule(schedule.beta_min(), x);
    } catch (const Error& e) {
      throw ConfigError(std::string("schedule: ") + e.what());
    }
  }
  else if (key == "gmm.dim") gmm.dim = config_get<int>(key, v);
  else if (key == "gmm.weights") gmm.weights = vec(key);
  else if (key == "gmm.means") gmm.means = nested(key);
  else if (key == "gmm.vars") gmm.vars = nested(key);
  else if (key == "data.n_per_class") data.n_per_class = config_get<int>(key, v);
  else if (key == "encoder.kind") encoder.kind = config_get<std::string>(key, v);
  else if (key == "encoder.seed") encoder.seed = config_get<std::uint64_t>(key, v);
  else if (key == "encoder.m") encoder.m = config_get<int>(key, v);
  else if (key == "encoder.hidden") encoder.hidden = config_get<int>(key, v);
  else if (key == "attack.eps") attack.eps = v.is_array() ? vec(key) : std::vector<double>{config_get<double>(key, v)};
  else if (key == "attack.steps") attack.steps = config_get<int>(key, v);
  else if (key == "attack.step_size") attack.step_size = config_get<double>(key, v);
  else if (key == "attack.temperature") attack.temperature = config_get<double>(key, v);
  else if (key == "attack.random_start") attack.random_start = config_get<bool>(key, v);
  else if (key == "adaptive.enabled") adaptive.enabled = config_get<bool>(key, v);
  else if (key == "adaptive.mode") adaptive.mode = config_get<std::string>(key, v);
  else if (key == "adaptive.eot_samples") adaptive.eot_samples = config_get<int>(key, v);
  else if (key == "adaptive.steps") adaptive.steps = config_get<int>(key, v);
  else if (key == "adaptive.n_points") adaptive.n_points = config_get<int>(key, v);
  else if (key == "purify.tau") purify.tau = config_get<double>(key, v);
  else if (key == "purify.T") purify.T = config_get<int>(key, v);
  else if (key == "purify.min_t") purify.min_t = config_get<double>(key, v);
  else if (key == "purify.injection") {
    try {
      purify.injection = parse_injection_mode(config_get<std::string>(key, v));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "purify.reverse_steps") purify.reverse.steps = config_get<int>(key, v);
  else if (key == "purify.reverse_mode") {
    try {
      purify.reverse.mode = parse_reverse_mode(config_get<std::string>(key, v));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  else if (key == "purify.use_calibrated_tau") use_calibrated_tau = config_get<bool>(key, v);
  else if (key == "baseline.t_fixed") baseline_t = config_get<double>(key, v);
  else if (key == "calibrate.enabled") calibrate.enabled = config_get<bool>(key, v);
  else if (key == "calibrate.n_pairs") calibrate.n_pairs = config_get<int>(key, v);
  else if (key == "calibrate.alpha") calibrate.alpha = config_get<double>(key, v);
  else if (key == "calibrate.test") calibrate.test = config_get<std::string>(key, v);
  else if (key == "certify.n_points") certify.n_points = config_get<int>(key, v);
  else if (key == "certify.t_grid") certify.t_grid = vec(key);
  else if (key == "certify.n_mc") certify.n_mc = config_get<std::uint64_t>(key, v);
  else if (key == "certify.confidence") certify.confidence = config_get<double>(key, v);
  else if (key == "theory.delta") theory.delta = config_get<double>(key, v);
  else if (key == "theory.t_grid") theory.t_grid = vec(key);
  else if (key == "theory.n_mc") theory.n_mc = config_get<std::uint64_t>(key, v);
  else if (key == "theory.lipschitz_pairs") theory.lipschitz_pairs = config_get<std::uint64_t>(key, v);
  else if (key == "theory.monitor_resolution") theory.monitor_resolution = config_get<std::size_t>(key, v);
  else if (key == "theory.convergence_ceiling") theory.convergence_ceiling = config_get<double>(key, v);
  else if (key == "report.include_timings") report.include_timings = config_get<bool>(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["schedule.beta_min"] = schedule.beta_min();
  j["schedule.beta_max"] = schedule.beta_max();
  j["gmm.dim"] = gmm.dim;
  j["gmm.weights"] = gmm.weights;
  j["gmm.means"] = gmm.means;
  j["gmm.vars"] = gmm.vars;
  j["data.n_per_class"] = data.n_per_class;
  j["encoder.kind"] = encoder.kind;
  j["encoder.seed"] = encoder.seed;
  j["encoder.m"] = encoder.m;
  j["encoder.hidden"] = encoder.hidden;
  j["attack.eps"] = attack.eps;
  j["attack.steps"] = attack.steps;
  j["attack.step_size"] = attack.step_size;
  j["attack.temperature"] = attack.temperature;
  j["attack.random_start"] = attack.random_start;
  j["adaptive.enabled"] = adaptive.enabled;
  j["adaptive.mode"] = adaptive.mode;
  j["adaptive.eot_samples"] = adaptive.eot_samples;
  j["adaptive.steps"] = adaptive.steps;
  j["adaptive.n_points"] = adaptive.n_points;
  j["purify.tau"] = purify.tau;
  j["purify.T"] = purify.T;
  j["purify.min_t"] = purify.min_t;
  j["purify.injection"] = to_string(purify.injection);
  j["purify.reverse_steps"] = purify.reverse.steps;
  j["purify.reverse_mode"] = to_string(purify.reverse.mode);
  j["purify.use_calibrated_tau"] = use_calibrated_tau;
  j["baseline.t_fixed"] = baseline_t;
  j["calibrate.enabled"] = calibrate.enabled;
  j["calibrate.n_pairs"] = calibrate.n_pairs;
  j["calibrate.alpha"] = calibrate.alpha;
  j["calibrate.test"] = calibrate.test;
  j["certify.n_points"] = certify.n_points;
  j["certify.t_grid"] = certify.t_grid;
  j["certify.n_mc"] = certify.n_mc;
  j["certify.confidence"] = certify.confidence;
  j["theory.delta"] = theory.delta;
  j["theory.t_grid"] = theory.t_grid;
  j["theory.n_mc"] = theory.n_mc;
  j["theory.lipschitz_pairs"] = theory.lipschitz_pairs;
  j["theory.monitor_resolution"] = theory.monitor_resolution;
  j["theory.convergence_ceiling"] = theory.convergence_ceiling;
  j["report.include_timings"] = report.include_timings;
  return j;
}

/// Parses config text on top of the defaults. Errors carry the line number.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig cfg = {}) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = detail::trim(detail::strip_comment(line));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    if (key.empty() || key.find_first_not_of("abcdefghijklmnopqrstuvwxyz0123456789_.T") != std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": invalid key '" + key + "'");
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": value is not a JSON literal: " + value);
    }
    try {
      cfg.set(key, v);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_config(ss.str());
  if (const char* dir = std::getenv("DIFFCAP_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
  return cfg;
}

}  // namespace diffcap
