#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diffcap/calibrate.hpp"
#include "diffcap/certify.hpp"
#include "diffcap/error.hpp"
#include "diffcap/stats.hpp"
#include "diffcap/theory.hpp"

#ifndef DIFFCAP_VERSION
#define DIFFCAP_VERSION "0.1.0"
#endif

namespace diffcap {

inline constexpr const char* kReportSchemaVersion = "1.0";

using ojson = nlohmann::ordered_json;

class SchemaVersionError : public Error {
 public:
  using Error::Error;
};

class SchemaValidationError : public Error {
 public:
  SchemaValidationError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct BudgetResult {
  double eps = 0.0;
  std::size_t n = 0;
  double attacked_accuracy = 0.0;
  double diffcap_accuracy = 0.0;
  double fixed_t_accuracy = 0.0;
  double attack_success_rate = 0.0;
  double mean_linf = 0.0;
  double mean_l2 = 0.0;
  stats::Summary t_stop;
  double mean_steps = 0.0;
};

struct AdaptiveResult {
  bool enabled = false;
  double eps = 0.0;
  std::string mode;
  int eot_samples = 0;
  int steps = 0;
  std::size_t n_points = 0;
  double undefended_accuracy = 0.0;
  double diffcap_vs_pgd_accuracy = 0.0;
  double diffcap_vs_adaptive_accuracy = 0.0;
};

struct CertificateSummary {
  std::size_t index = 0;
  std::size_t label = 0;
  double eps_l2 = 0.0;
  SmoothingEstimate smoothing;
  std::optional<Certificate> certificate;  // empty when p1_lower <= p2_upper
};

struct ExperimentReport {
  ojson config;
  std::size_t n_examples = 0;
  std::size_t dim = 0;
  std::size_t classes = 0;
  double clean_accuracy = 0.0;
  std::optional<CalibrationReport> calibration;
  double calibration_alpha = 0.0;
  std::string calibration_test;
  double tau_used = 0.0;
  std::string tau_source;
  std::string injection;
  double fixed_t = 0.0;
  std::vector<BudgetResult> budgets;
  AdaptiveResult adaptive;
  std::vector<CertificateSummary> certificates;
  std::vector<std::pair<std::string, double>> timings;  // seconds per stage
  bool include_timings = false;
};

// ---------------------------------------------------------------------------------------------
// JSON encoders

inline ojson to_json(const stats::Summary& s) {
  return ojson{{"count", s.count}, {"min", s.min},   {"q1", s.q1},      {"median", s.median},
               {"q3", s.q3},       {"max", s.max},   {"mean", s.mean},  {"stddev", s.stddev}};
}

inline ojson to_json(const CalibrationReport& r) {
  ojson steps = ojson::array();
  for (const auto& s : r.per_step)
    steps.push_back({{"t", s.t}, {"statistic", s.statistic}, {"p_value", s.p_value},
                     {"mean_clean", s.mean_clean}, {"mean_adv", s.mean_adv}});
  return ojson{{"tau", r.tau},         {"t_star", r.t_star}, {"converged", r.converged},
               {"n_pairs", r.n_pairs}, {"per_step", steps},  {"final_clean", r.final_clean},
               {"final_adv", r.final_adv}};
}

inline ojson to_json(const SmoothingEstimate& e) {
  ojson per_t = ojson::array();
  for (const auto& p : e.per_t)
    per_t.push_back({{"t", p.t}, {"counts", p.counts}, {"p1_lower", p.p1_lower}, {"p2_upper", p.p2_upper},
                     {"condition_holds", p.condition_holds}});
  return ojson{{"k1", e.k1},
               {"p1_lower", e.p1_lower},
               {"p2_upper", e.p2_upper},
               {"n_samples", e.n_samples},
               {"confidence", e.confidence},
               {"t_grid", e.t_grid},
               {"grid_note", "bounds are the worst case over the listed t grid only"},
               {"per_t", per_t}};
}

inline ojson to_json(const Certificate& c) {
  return ojson{{"eps_l2", c.eps_l2}, {"p1", c.p1},       {"p2", c.p2},       {"quantile_gap", c.quantile_gap},
               {"M", c.M},           {"t_min", c.t_min}, {"valid", c.valid}, {"beta_min", c.schedule.beta_min()},
               {"beta_max", c.schedule.beta_max()}};
}

inline ojson to_json(const theory::DriftCurve& c) {
  ojson pts = ojson::array();
  for (const auto& p : c.points)
    pts.push_back({{"t", p.t}, {"estimate", p.estimate}, {"std_error", p.std_error}, {"bound", p.bound}});
  return ojson{{"delta", c.delta},
               {"n_mc", c.n_mc},
               {"lipschitz", c.lipschitz},
               {"bound_form", "0.5 * L * sqrt(d) * delta * beta(t) * sqrt(alpha(t) / (1 - alpha(t)))"},
               {"points", pts}};
}

inline ojson to_json(const ExperimentReport& r) {
  ojson j;
  j["schema_version"] = kReportSchemaVersion;
  j["tool"] = {{"name", "diffcap"}, {"version", DIFFCAP_VERSION}};
  j["config"] = r.config;
  j["dataset"] = {{"n_examples", r.n_examples}, {"dim", r.dim}, {"classes", r.classes}};
  j["clean_accuracy"] = r.clean_accuracy;
  if (r.calibration) {
    ojson c = to_json(*r.calibration);
    c.erase("final_clean");
    c.erase("final_adv");
    c["alpha"] = r.calibration_alpha;
    c["test"] = r.calibration_test;
    j["calibration"] = c;
  } else {
    j["calibration"] = nullptr;
  }
  j["purify"] = {{"tau", r.tau_used},
                 {"tau_source", r.tau_source},
                 {"injection", r.injection},
                 {"diagnostic_only", r.injection == "resample"},
                 {"fixed_t", r.fixed_t}};
  ojson budgets = ojson::array();
  for (const auto& b : r.budgets)
    budgets.push_back({{"eps", b.eps},
                       {"n", b.n},
                       {"accuracy",
                        {{"clean", r.clean_accuracy},
                         {"attacked", b.attacked_accuracy},
                         {"diffcap", b.diffcap_accuracy},
                         {"fixed_t", b.fixed_t_accuracy}}},
                       {"attack_success_rate", b.attack_success_rate},
                       {"mean_linf", b.mean_linf},
                       {"mean_l2", b.mean_l2},
                       {"t_stop", to_json(b.t_stop)},
                       {"mean_steps", b.mean_steps}});
  j["budgets"] = budgets;
  if (r.adaptive.enabled) {
    j["adaptive"] = {{"eps", r.adaptive.eps},
                     {"mode", r.adaptive.mode},
                     {"eot_samples", r.adaptive.eot_samples},
                     {"steps", r.adaptive.steps},
                     {"n_points", r.adaptive.n_points},
                     {"accuracy",
                      {{"undefended", r.adaptive.undefended_accuracy},
                       {"diffcap_vs_pgd", r.adaptive.diffcap_vs_pgd_accuracy},
                       {"diffcap_vs_adaptive", r.adaptive.diffcap_vs_adaptive_accuracy}}}};
  } else {
    j["adaptive"] = nullptr;
  }
  ojson certs = ojson::array();
  for (const auto& c : r.certificates) {
    ojson e{{"index", c.index}, {"label", c.label}, {"eps_l2", c.eps_l2}, {"smoothing", to_json(c.smoothing)}};
    if (c.certificate) {
      e["certificate"] = to_json(*c.certificate);
      ojson radius = ojson::array();
      for (double t : c.smoothing.t_grid) radius.push_back({{"t", t}, {"radius", c.certificate->radius_at(t)}});
      e["radius"] = radius;
    } else {
      e["certificate"] = nullptr;
      e["radius"] = ojson::array();
    }
    certs.push_back(std::move(e));
  }
  j["certificates"] = certs;
  if (r.include_timings) {
    ojson t = ojson::object();
    for (const auto& [k, v] : r.timings) t[k] = v;
    j["timings_s"] = t;
  }
  return j;
}

// ---------------------------------------------------------------------------------------------
// Schema

inline const char* report_schema_text() {
  return R"JSON({
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "diffcap experiment report",
  "type": "object",
  "required": ["schema_version", "tool", "config", "dataset", "clean_accuracy", "calibration", "purify", "budgets", "adaptive", "certificates"],
  "properties": {
    "schema_version": {"type": "string", "enum": ["1.0"]},
    "tool": {
      "type": "object",
      "required": ["name", "version"],
      "properties": {"name": {"type": "string"}, "version": {"type": "string"}}
    },
    "config": {"type": "object"},
    "dataset": {
      "type": "object",
      "required": ["n_examples", "dim", "classes"],
      "properties": {
        "n_examples": {"type": "integer", "minimum": 1},
        "dim": {"type": "integer", "minimum": 1},
        "classes": {"type": "integer", "minimum": 2}
      }
    },
    "clean_accuracy": {"$ref": "#/$defs/accuracy"},
    "calibration": {
      "type": ["object", "null"],
      "required": ["tau", "t_star", "converged", "n_pairs", "per_step", "alpha", "test"],
      "properties": {
        "tau": {"type": "number", "minimum": -1, "maximum": 1},
        "t_star": {"type": "number", "minimum": 0, "maximum": 1},
        "converged": {"type": "boolean"},
        "n_pairs": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "minimum": 0, "maximum": 1},
        "test": {"type": "string", "enum": ["ks", "permutation"]},
        "per_step": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["t", "statistic", "p_value", "mean_clean", "mean_adv"],
            "properties": {
              "t": {"type": "number", "minimum": 0, "maximum": 1},
              "statistic": {"type": "number"},
              "p_value": {"type": "number", "minimum": 0, "maximum": 1},
              "mean_clean": {"type": "number"},
              "mean_adv": {"type": "number"}
            }
          }
        }
      }
    },
    "purify": {
      "type": "object",
      "required": ["tau", "tau_source", "injection", "diagnostic_only", "fixed_t"],
      "properties": {
        "tau": {"type": "number"},
        "tau_source": {"type": "string", "enum": ["config", "calibrated"]},
        "injection": {"type": "string", "enum": ["shared", "markov", "resample"]},
        "diagnostic_only": {"type": "boolean"},
        "fixed_t": {"type": "number", "minimum": 0, "maximum": 1}
      }
    },
    "budgets": {
      "type": "array",
      "minItems": 1,
      "items": {
        "type": "object",
        "required": ["eps", "n", "accuracy", "attack_success_rate", "mean_linf", "mean_l2", "t_stop", "mean_steps"],
        "properties": {
          "eps": {"type": "number", "minimum": 0},
          "n": {"type": "integer", "minimum": 1},
          "accuracy": {
            "type": "object",
            "required": ["clean", "attacked", "diffcap", "fixed_t"],
            "properties": {
              "clean": {"$ref": "#/$defs/accuracy"},
              "attacked": {"$ref": "#/$defs/accuracy"},
              "diffcap": {"$ref": "#/$defs/accuracy"},
              "fixed_t": {"$ref": "#/$defs/accuracy"}
            }
          },
          "attack_success_rate": {"type": "number", "minimum": 0, "maximum": 1},
          "mean_linf": {"type": "number", "minimum": 0},
          "mean_l2": {"type": "number", "minimum": 0},
          "t_stop": {"$ref": "#/$defs/summary"},
          "mean_steps": {"type": "number", "minimum": 0}
        }
      }
    },
    "adaptive": {
      "type": ["object", "null"],
      "required": ["eps", "mode", "eot_samples", "steps", "n_points", "accuracy"],
      "properties": {
        "eps": {"type": "number", "minimum": 0},
        "mode": {"type": "string", "enum": ["bpda", "bpda+eot"]},
        "eot_samples": {"type": "integer", "minimum": 1},
        "steps": {"type": "integer", "minimum": 1},
        "n_points": {"type": "integer", "minimum": 1},
        "accuracy": {
          "type": "object",
          "required": ["undefended", "diffcap_vs_pgd", "diffcap_vs_adaptive"],
          "properties": {
            "undefended": {"$ref": "#/$defs/accuracy"},
            "diffcap_vs_pgd": {"$ref": "#/$defs/accuracy"},
            "diffcap_vs_adaptive": {"$ref": "#/$defs/accuracy"}
          }
        }
      }
    },
    "certificates": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["index", "label", "eps_l2", "smoothing", "certificate", "radius"],
        "properties": {
          "index": {"type": "integer", "minimum": 0},
          "label": {"type": "integer", "minimum": 0},
          "eps_l2": {"type": "number", "minimum": 0},
          "smoothing": {
            "type": "object",
            "required": ["k1", "p1_lower", "p2_upper", "n_samples", "confidence", "t_grid", "per_t"],
            "properties": {
              "p1_lower": {"type": "number", "minimum": 0, "maximum": 1},
              "p2_upper": {"type": "number", "minimum": 0, "maximum": 1},
              "t_grid": {"type": "array", "items": {"type": "number"}}
            }
          },
          "certificate": {
            "type": ["object", "null"],
            "required": ["eps_l2", "p1", "p2", "quantile_gap", "M", "t_min", "valid"],
            "properties": {
              "M": {"type": "number", "minimum": 0},
              "t_min": {"type": "number", "minimum": 0},
              "valid": {"type": "boolean"}
            }
          },
          "radius": {"type": "array"}
        }
      }
    },
    "timings_s": {"type": "object"}
  },
  "$defs": {
    "accuracy": {"type": "number", "minimum": 0, "maximum": 100},
    "summary": {
      "type": "object",
      "required": ["count", "min", "q1", "median", "q3", "max", "mean", "stddev"],
      "properties": {
        "count": {"type": "integer", "minimum": 1},
        "min": {"type": "number"},
        "q1": {"type": "number"},
        "median": {"type": "number"},
        "q3": {"type": "number"},
        "max": {"type": "number"},
        "mean": {"type": "number"},
        "stddev": {"type": "number", "minimum": 0}
      }
    }
  }
}
)JSON";
}

inline const nlohmann::json& report_schema() {
  static const nlohmann::json schema = nlohmann::json::parse(report_schema_text());
  return schema;
}

namespace detail {

inline bool json_has_type(const nlohmann::json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  throw Error("schema: unknown type '" + type + "'");
}

inline const nlohmann::json& resolve_ref(const nlohmann::json& root, const std::string& ref) {
  if (ref.rfind("#/", 0) != 0) throw Error("schema: only local $ref is supported: " + ref);
  return root.at(nlohmann::json::json_pointer(ref.substr(1)));
}

inline void validate_node(const nlohmann::json& root, const nlohmann::json& schema, const nlohmann::json& v,
                          const std::string& path) {
  const std::string here = path.empty() ? "/" : path;
  if (auto it = schema.find("$ref"); it != schema.end()) {
    validate_node(root, resolve_ref(root, it->get<std::string>()), v, path);
    return;
  }
  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_array()) {
      for (const auto& t : *it) ok = ok || json_has_type(v, t.get<std::string>());
    } else {
      ok = json_has_type(v, it->get<std::string>());
    }
    if (!ok) throw SchemaValidationError(here, "expected type " + it->dump());
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    bool found = false;
    for (const auto& e : *it) found = found || e == v;
    if (!found) throw SchemaValidationError(here, "value " + v.dump() + " not in " + it->dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && x < it->get<double>())
      throw SchemaValidationError(here, "value below minimum " + it->dump());
    if (auto it = schema.find("maximum"); it != schema.end() && x > it->get<double>())
      throw SchemaValidationError(here, "value above maximum " + it->dump());
  }
  if (v.is_object()) {
    if (auto it = schema.find("required"); it != schema.end())
      for (const auto& key : *it)
        if (!v.contains(key.get<std::string>()))
          throw SchemaValidationError(path + "/" + key.get<std::string>(), "required field missing");
    if (auto it = schema.find("properties"); it != schema.end())
      for (const auto& [key, sub] : it->items())
        if (v.contains(key)) validate_node(root, sub, v.at(key), path + "/" + key);
  }
  if (v.is_array()) {
    if (auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>())
      throw SchemaValidationError(here, "fewer than " + it->dump() + " items");
    if (auto it = schema.find("items"); it != schema.end())
      for (std::size_t i = 0; i < v.size(); ++i) validate_node(root, *it, v[i], path + "/" + std::to_string(i));
  }
}

}  // namespace detail

/// Checks a document against a JSON schema (subset: type, enum, required, properties, items,
/// minItems, minimum, maximum, local $ref). Throws SchemaValidationError naming the JSON
/// pointer of the first offending field.
inline void validate_against(const nlohmann::json& schema, const nlohmann::json& doc) {
  detail::validate_node(schema, schema, doc, "");
}

/// Schema check plus the ordering of every t_stop summary.
inline void validate_report(const nlohmann::json& doc) {
  validate_against(report_schema(), doc);
  const auto& budgets = doc.at("budgets");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    const auto& s = budgets[i].at("t_stop");
    const double seq[] = {s.at("min").get<double>(), s.at("q1").get<double>(), s.at("median").get<double>(),
                          s.at("q3").get<double>(), s.at("max").get<double>()};
    for (int k = 1; k < 5; ++k)
      if (seq[k] < seq[k - 1])
        throw SchemaValidationError("/budgets/" + std::to_string(i) + "/t_stop", "summary is not ordered");
    if (s.at("mean").get<double>() < seq[0] || s.at("mean").get<double>() > seq[4])
      throw SchemaValidationError("/budgets/" + std::to_string(i) + "/t_stop/mean", "mean outside [min, max]");
  }
}

/// Parses a report, rejecting other schema versions before validation.
inline nlohmann::json read_report(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaValidationError("/", std::string("not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema_version") || !doc["schema_version"].is_string())
    throw SchemaVersionError("report has no schema_version");
  const auto version = doc["schema_version"].get<std::string>();
  if (version != kReportSchemaVersion)
    throw SchemaVersionError("report schema version " + version + " is not supported (expected " +
                             kReportSchemaVersion + ")");
  validate_report(doc);
  return doc;
}

inline std::string dump_report(const ExperimentReport& r) { return to_json(r).dump(2) + "\n"; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace diffcap
