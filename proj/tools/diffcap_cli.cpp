// diffcap command-line front end.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 stage failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diffcap/diffcap.hpp"

namespace fs = std::filesystem;
using namespace diffcap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "Config file (dotted key = JSON value lines)");
  sub->add_option("--seed", o.seed, "Master seed; overrides the config");
  sub->add_option("--out", o.out_dir, "Output directory; overrides the config and DIFFCAP_OUTPUT_DIR");
  sub->add_option("--set", o.overrides, "Extra assignment key=value (repeatable)");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) {
    cfg = load_config(o.config_path);
  } else if (const char* dir = std::getenv("DIFFCAP_OUTPUT_DIR"); dir && *dir) {
    cfg.output_dir = dir;
  }
  for (const auto& kv : o.overrides) cfg = parse_config(kv, cfg);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  cfg.validate();
  return cfg;
}

fs::path prepare_output(const ExperimentConfig& cfg) {
  fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<std::size_t> labels_from_tensor(const Tensor& t, std::size_t n) {
  if (t.shape.size() != 2 || t.shape[0] != n || t.shape[1] != 1)
    throw ConfigError("labels tensor must have shape [n, 1] matching the inputs");
  std::vector<std::size_t> y;
  for (float v : t.data) {
    if (v < 0.0f) throw ConfigError("labels must be non-negative");
    y.push_back(static_cast<std::size_t>(v));
  }
  return y;
}

/// Inputs and labels: given tensors, or the synthetic dataset of the config.
struct Batch {
  std::vector<Vector> x;
  std::vector<std::size_t> y;
};

Batch load_batch(const Setup& setup, const std::string& input, const std::string& labels) {
  if (input.empty()) return Batch{setup.data.x, setup.data.y};
  Batch b;
  b.x = tensor_to_rows(read_tensor(input));
  for (const auto& x : b.x)
    if (x.size() != setup.clf.input_dim()) throw ConfigError("input tensor width does not match gmm.dim");
  if (!labels.empty()) {
    b.y = labels_from_tensor(read_tensor(labels), b.x.size());
  } else {
    for (const auto& x : b.x) b.y.push_back(setup.clf.predict(x));
  }
  for (auto y : b.y)
    if (y >= setup.clf.classes()) throw ConfigError("label out of range");
  return b;
}

// ---------------------------------------------------------------------------------------------

int cmd_experiment(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  const ExperimentReport rep = run_experiment(cfg);
  std::cout << "clean accuracy " << rep.clean_accuracy << "%\n";
  for (const auto& b : rep.budgets)
    std::cout << "eps " << b.eps << ": attacked " << b.attacked_accuracy << "%, diffcap " << b.diffcap_accuracy
              << "%, fixed-t " << b.fixed_t_accuracy << "%, median t_stop " << b.t_stop.median << "\n";
  std::cout << "report: " << (fs::path(cfg.output_dir) / "report.json").string() << "\n";
  return kExitOk;
}

struct AttackOptions {
  std::optional<double> eps;
  std::optional<int> steps;
  std::optional<double> step_size;
  std::string mode = "pgd";
  std::string input, labels;
};

int cmd_attack(const CommonOptions& o, const AttackOptions& a) {
  ExperimentConfig cfg = resolve_config(o);
  if (a.mode != "pgd" && a.mode != "bpda" && a.mode != "bpda+eot") throw ConfigError("--mode must be pgd|bpda|bpda+eot");
  AttackConfig ac = cfg.attack_config(a.eps.value_or(cfg.primary_eps()));
  if (a.steps) ac.n_steps = *a.steps;
  if (a.step_size) ac.step_size = *a.step_size;
  try {
    ac.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = prepare_output(cfg);
  const Setup setup = make_setup(cfg);
  const Batch batch = load_batch(setup, a.input, a.labels);
  const Purifier purifier = [&](const Vector& x, NoiseStream& noise) {
    return diffcap_purify(x, setup.clf.encoder(), cfg.schedule, setup.score, cfg.purify, noise).x_clean;
  };
  std::vector<Vector> rows;
  std::size_t successes = 0;
  double linf = 0.0, l2 = 0.0;
  try {
    for (std::size_t i = 0; i < batch.x.size(); ++i) {
      AdversarialExample ex;
      if (a.mode == "pgd") {
        NoiseStream noise(cfg.seed, i, Purpose::kAttack);
        ex = pgd(setup.clf, batch.x[i], batch.y[i], ac, noise);
      } else {
        NoiseStream noise(cfg.seed, i, Purpose::kEot);
        const auto mode = a.mode == "bpda" ? AdaptiveMode::kBpda : AdaptiveMode::kBpdaEot;
        ex = adaptive_attack(setup.clf, purifier, batch.x[i], batch.y[i], ac, mode, cfg.adaptive.eot_samples, noise);
      }
      successes += ex.success ? 1 : 0;
      linf += ex.linf_norm;
      l2 += ex.l2_norm;
      rows.push_back(std::move(ex.x_adv));
    }
  } catch (const std::exception& e) {
    throw StageError("attack", e.what());
  }
  write_tensor(dir / "adv.f32t", rows_to_tensor(rows));
  std::vector<double> labels(batch.y.begin(), batch.y.end());
  write_tensor(dir / "labels.f32t", column_tensor(labels));
  const double n = static_cast<double>(rows.size());
  ojson summary{{"tool", {{"name", "diffcap"}, {"version", DIFFCAP_VERSION}}},
                {"config", cfg.to_json()},
                {"mode", a.mode},
                {"eps", ac.epsilon},
                {"steps", ac.n_steps},
                {"step_size", ac.step_size},
                {"n", rows.size()},
                {"success_rate", n > 0 ? successes / n : 0.0},
                {"attacked_accuracy", accuracy_percent(setup.clf, rows, batch.y)},
                {"mean_linf", n > 0 ? linf / n : 0.0},
                {"mean_l2", n > 0 ? l2 / n : 0.0},
                {"tensor", "adv.f32t"}};
  write_json(dir / "attack_summary.json", summary);
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

struct PurifyOptions {
  std::string input, labels;
  std::optional<double> tau;
  std::optional<int> T;
  std::optional<double> min_t;
  std::string mode;
  std::string reverse_mode;
  std::string method = "diffcap";
  std::optional<double> t_fixed;
};

int cmd_purify(const CommonOptions& o, const PurifyOptions& p) {
  ExperimentConfig cfg = resolve_config(o);
  PurifyConfig pc = cfg.purify;
  if (p.tau) pc.tau = *p.tau;
  if (p.T) pc.T = *p.T;
  if (p.min_t) pc.min_t = *p.min_t;
  try {
    if (!p.mode.empty()) pc.injection = parse_injection_mode(p.mode);
    if (!p.reverse_mode.empty()) pc.reverse.mode = parse_reverse_mode(p.reverse_mode);
    pc.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (p.method != "diffcap" && p.method != "fixed") throw ConfigError("--method must be diffcap|fixed");
  const double t_fixed = p.t_fixed.value_or(cfg.baseline_t);
  const fs::path dir = prepare_output(cfg);
  const Setup setup = make_setup(cfg);
  const Batch batch = load_batch(setup, p.input, p.labels);
  std::vector<Vector> rows;
  std::string records;
  try {
    for (std::size_t i = 0; i < batch.x.size(); ++i) {
      PurificationResult r;
      if (p.method == "diffcap") {
        NoiseStream noise(cfg.seed, i, Purpose::kInject);
        r = diffcap_purify(batch.x[i], setup.clf.encoder(), cfg.schedule, setup.score, pc, noise);
      } else {
        NoiseStream noise(cfg.seed, i, Purpose::kFixedBaseline);
        r = fixed_t_purify(batch.x[i], cfg.schedule, setup.score, t_fixed, pc.reverse, noise);
      }
      ojson rec{{"index", i},
                {"t_stop", r.t_stop},
                {"steps_used", r.steps_used},
                {"label", batch.y[i]},
                {"predicted", setup.clf.predict(r.x_clean)},
                {"trace", r.similarity_trace}};
      records += rec.dump() + "\n";
      rows.push_back(std::move(r.x_clean));
    }
  } catch (const std::exception& e) {
    throw StageError("purify", e.what());
  }
  write_tensor(dir / "purified.f32t", rows_to_tensor(rows));
  write_text(dir / "records.jsonl", records);
  ojson summary{{"method", p.method},
                {"tau", pc.tau},
                {"T", pc.T},
                {"min_t", pc.min_t},
                {"injection", to_string(pc.injection)},
                {"diagnostic_only", pc.injection == InjectionMode::kResample},
                {"reverse_mode", to_string(pc.reverse.mode)},
                {"n", rows.size()},
                {"accuracy", accuracy_percent(setup.clf, rows, batch.y)}};
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

struct CalibrateCliOptions {
  std::string pairs;
  std::optional<int> T;
  std::optional<double> alpha;
  std::string test;
};

PairSet pairs_from_tensor(const Tensor& t, double budget) {
  if (t.shape.size() != 3 || t.shape[1] != 2) throw ConfigError("pairs tensor must have shape [n, 2, d]");
  const auto n = t.shape[0], d = t.shape[2];
  std::vector<std::pair<Vector, Vector>> pairs;
  for (std::uint64_t i = 0; i < n; ++i) {
    Vector a(static_cast<Eigen::Index>(d)), b(static_cast<Eigen::Index>(d));
    for (std::uint64_t j = 0; j < d; ++j) {
      a[static_cast<Eigen::Index>(j)] = t.data[(2 * i) * d + j];
      b[static_cast<Eigen::Index>(j)] = t.data[(2 * i + 1) * d + j];
    }
    pairs.emplace_back(std::move(a), std::move(b));
  }
  return PairSet(std::move(pairs), budget);
}

int cmd_calibrate(const CommonOptions& o, const CalibrateCliOptions& c) {
  ExperimentConfig cfg = resolve_config(o);
  CalibrateOptions co;
  co.T = c.T.value_or(cfg.purify.T);
  co.significance = c.alpha.value_or(cfg.calibrate.alpha);
  co.injection = cfg.purify.injection;
  try {
    co.test = parse_test(c.test.empty() ? cfg.calibrate.test : c.test);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (co.T < 1) throw ConfigError("--T must be >= 1");
  if (!(co.significance > 0.0 && co.significance < 1.0)) throw ConfigError("--alpha must lie in (0,1)");
  const fs::path dir = prepare_output(cfg);
  const Setup setup = make_setup(cfg);
  std::optional<PairSet> pairs;
  if (!c.pairs.empty()) {
    pairs = pairs_from_tensor(read_tensor(c.pairs), cfg.primary_eps());
  } else {
    const AttackConfig ac = cfg.attack_config(cfg.primary_eps());
    std::vector<std::pair<Vector, Vector>> v;
    for (std::size_t i : spread_indices(setup.data.size(), static_cast<std::size_t>(cfg.calibrate.n_pairs))) {
      NoiseStream noise(cfg.seed, i, Purpose::kAttack);
      v.emplace_back(setup.data.x[i], pgd(setup.clf, setup.data.x[i], setup.data.y[i], ac, noise).x_adv);
    }
    pairs.emplace(std::move(v), ac.epsilon);
  }
  CalibrationReport rep;
  try {
    NoiseStream noise(cfg.seed, 0, Purpose::kCalibrate);
    rep = calibrate_tau(*pairs, setup.clf.encoder(), cfg.schedule, co, noise);
  } catch (const std::exception& e) {
    throw StageError("calibrate", e.what());
  }
  ojson j = to_json(rep);
  j["alpha"] = co.significance;
  j["test"] = to_string(co.test);
  j["T"] = co.T;
  write_json(dir / "calibration.json", j);
  std::cout << "tau " << rep.tau << " at t* " << rep.t_star << (rep.converged ? "" : " (not converged)") << "\n";
  return kExitOk;
}

struct CertifyOptions {
  std::optional<double> eps;
  std::vector<double> t_grid;
  std::optional<std::uint64_t> n_mc;
  std::string input;
};

int cmd_certify(const CommonOptions& o, const CertifyOptions& c) {
  ExperimentConfig cfg = resolve_config(o);
  const std::vector<double> grid = c.t_grid.empty() ? cfg.certify.t_grid : c.t_grid;
  const std::uint64_t n_mc = c.n_mc.value_or(cfg.certify.n_mc);
  const double eps = c.eps.value_or(0.5);
  if (!(eps >= 0.0)) throw ConfigError("--eps must be >= 0");
  if (n_mc < 100) throw ConfigError("--n-mc must be >= 100");
  for (double t : grid)
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("--t-grid entries must lie in (0,1]");
  const fs::path dir = prepare_output(cfg);
  const Setup setup = make_setup(cfg);
  std::vector<Vector> points;
  std::vector<std::size_t> index;
  if (!c.input.empty()) {
    points = tensor_to_rows(read_tensor(c.input));
    for (std::size_t i = 0; i < points.size(); ++i) index.push_back(i);
  } else {
    for (std::size_t i : spread_indices(setup.data.size(), static_cast<std::size_t>(cfg.certify.n_points))) {
      points.push_back(setup.data.x[i]);
      index.push_back(i);
    }
  }
  ojson out = ojson::array();
  try {
    for (std::size_t j = 0; j < points.size(); ++j) {
      NoiseStream noise(cfg.seed, index[j], Purpose::kCertify);
      const auto est = estimate_class_probs(setup.clf, points[j], cfg.schedule, grid, n_mc, cfg.certify.confidence, noise);
      ojson e{{"index", index[j]}, {"smoothing", to_json(est)}};
      if (est.p1_lower > est.p2_upper) {
        const auto cert = compute_certificate(cfg.schedule, eps, est.p1_lower, est.p2_upper);
        e["certificate"] = to_json(cert);
        ojson radius = ojson::array();
        for (double t : grid) radius.push_back({{"t", t}, {"radius", cert.radius_at(t)}});
        e["radius"] = radius;
      } else {
        e["certificate"] = nullptr;
        e["note"] = "p1_lower <= p2_upper on the grid; no certificate";
      }
      out.push_back(std::move(e));
    }
  } catch (const std::exception& e) {
    throw StageError("certify", e.what());
  }
  ojson doc{{"tool", {{"name", "diffcap"}, {"version", DIFFCAP_VERSION}}},
            {"config", cfg.to_json()},
            {"eps_l2", eps},
            {"points", out}};
  write_json(dir / "certify.json", doc);
  std::cout << doc["points"].dump(2) << "\n";
  return kExitOk;
}

int cmd_theory(const CommonOptions& o) {
  const ExperimentConfig cfg = resolve_config(o);
  const fs::path dir = prepare_output(cfg);
  TheoryCheckResult r;
  try {
    r = run_theory_check(cfg);
  } catch (const std::exception& e) {
    throw StageError("theory-check", e.what());
  }
  write_text(dir / "theory_drift.csv", drift_csv(r.drift));
  ojson j = to_json(r);
  j["config"] = cfg.to_json();
  write_json(dir / "theory.json", j);
  std::cout << "monitor decreasing: " << (r.monitor.passed ? "yes" : "no") << "\n"
            << "drift spearman: " << r.drift_spearman << ", below bound: " << (r.drift_below_bound ? "yes" : "no")
            << "\n"
            << "convergence: " << (r.convergence.passed ? "yes" : "no") << "\n"
            << "verdict: " << (r.passed ? "pass" : "fail") << "\n";
  return r.passed ? kExitOk : kExitStage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive diffusion purification toolkit"};
  app.set_version_flag("--version", DIFFCAP_VERSION);
  app.require_subcommand(1);

  CommonOptions common;

  auto* experiment = app.add_subcommand("experiment", "Run the full pipeline and write report.json");
  add_common(experiment, common);

  AttackOptions ao;
  auto* attack = app.add_subcommand("attack", "Craft adversarial examples");
  add_common(attack, common);
  attack->add_option("--eps", ao.eps, "l_inf budget");
  attack->add_option("--steps", ao.steps, "PGD iterations");
  attack->add_option("--step-size", ao.step_size, "Absolute step size");
  attack->add_option("--mode", ao.mode, "pgd | bpda | bpda+eot");
  attack->add_option("--input", ao.input, "Tensor file of clean inputs [n, d]");
  attack->add_option("--labels", ao.labels, "Tensor file of labels [n, 1]");

  PurifyOptions po;
  auto* purify = app.add_subcommand("purify", "Purify a batch of inputs");
  add_common(purify, common);
  purify->add_option("--input", po.input, "Tensor file of inputs [n, d]");
  purify->add_option("--labels", po.labels, "Tensor file of labels [n, 1]");
  purify->add_option("--tau", po.tau, "Similarity threshold");
  purify->add_option("--T", po.T, "Noise levels up to t = 1");
  purify->add_option("--min-t", po.min_t, "Earliest allowed stop (exclusive)");
  purify->add_option("--mode", po.mode, "Noise injection: shared | markov | resample");
  purify->add_option("--reverse-mode", po.reverse_mode, "stochastic | probability-flow");
  purify->add_option("--method", po.method, "diffcap | fixed");
  purify->add_option("--t-fixed", po.t_fixed, "Diffusion time of the fixed baseline");

  CalibrateCliOptions co;
  auto* calibrate = app.add_subcommand("calibrate", "Select the similarity threshold");
  add_common(calibrate, common);
  calibrate->add_option("--pairs", co.pairs, "Tensor file of (clean, adversarial) pairs [n, 2, d]");
  calibrate->add_option("--T", co.T, "Noise levels up to t = 1");
  calibrate->add_option("--alpha", co.alpha, "Significance level of the two-sample test");
  calibrate->add_option("--test", co.test, "ks | permutation");

  CertifyOptions ce;
  auto* certify = app.add_subcommand("certify", "Smoothed-classifier certificates");
  add_common(certify, common);
  certify->add_option("--eps", ce.eps, "l2 norm of the perturbation to certify");
  certify->add_option("--t-grid", ce.t_grid, "Diffusion times for the probability bounds")->delimiter(',');
  certify->add_option("--n-mc", ce.n_mc, "Monte-Carlo samples per grid time");
  certify->add_option("--input", ce.input, "Tensor file of points [n, d]");

  auto* theory_check = app.add_subcommand("theory-check", "Monitor, drift and convergence checks");
  add_common(theory_check, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*experiment) return cmd_experiment(common);
    if (*attack) return cmd_attack(common, ao);
    if (*purify) return cmd_purify(common, po);
    if (*calibrate) return cmd_calibrate(common, co);
    if (*certify) return cmd_certify(common, ce);
    if (*theory_check) return cmd_theory(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return kExitOk;
}
