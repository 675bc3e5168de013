#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "diffcap/attack.hpp"
#include "diffcap/calibrate.hpp"
#include "diffcap/certify.hpp"
#include "diffcap/config.hpp"
#include "diffcap/embed.hpp"
#include "diffcap/purify.hpp"
#include "diffcap/report.hpp"
#include "diffcap/tensor_io.hpp"
#include "diffcap/theory.hpp"

namespace diffcap {

/// A pipeline stage failed. Artifacts written by earlier stages are left in place.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct Dataset {
  std::vector<Vector> x;
  std::vector<std::size_t> y;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return x.size(); }
};

/// n_per_class draws from each mixture component, clamped to [-1,1]^d and labelled by
/// component. Point i uses stream (seed, i, data).
inline Dataset synth_dataset(const GmmDistribution& gmm, int n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw DomainError("synth_dataset: n_per_class must be >= 1");
  Dataset ds;
  ds.classes = gmm.components();
  std::uint64_t unit = 0;
  for (std::size_t k = 0; k < gmm.components(); ++k) {
    for (int i = 0; i < n_per_class; ++i, ++unit) {
      NoiseStream noise(seed, unit, Purpose::kData);
      ds.x.push_back(clamp_to_box(gmm.sample_component(k, noise)));
      ds.y.push_back(k);
    }
  }
  return ds;
}

/// Per-class means of a labelled dataset.
inline std::vector<Vector> class_means(const Dataset& ds) {
  std::vector<Vector> sums(ds.classes, Vector::Zero(ds.x.front().size()));
  std::vector<std::size_t> counts(ds.classes, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    sums[ds.y[i]] += ds.x[i];
    ++counts[ds.y[i]];
  }
  for (std::size_t k = 0; k < ds.classes; ++k) {
    if (counts[k] == 0) throw DomainError("class_means: class " + std::to_string(k) + " is empty");
    sums[k] /= static_cast<double>(counts[k]);
  }
  return sums;
}

/// k indices spread evenly over [0, n).
inline std::vector<std::size_t> spread_indices(std::size_t n, std::size_t k) {
  k = std::min(k, n);
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t j = 0; j < k; ++j) out.push_back(j * n / k);
  return out;
}

inline AnyEncoder make_encoder(const ExperimentConfig& cfg) {
  if (cfg.encoder.kind == "linear") return LinearEncoder(cfg.encoder.m, cfg.gmm.dim, cfg.encoder.seed);
  if (cfg.encoder.kind == "mlp") return MlpEncoder(cfg.encoder.m, cfg.gmm.dim, cfg.encoder.hidden, cfg.encoder.seed);
  throw ConfigError("encoder.kind must be linear|mlp");
}

/// Everything derived deterministically from a config: data, classifier and score model.
struct Setup {
  GmmDistribution gmm;
  Dataset data;
  CosineClassifier<AnyEncoder> clf;
  ScoreFn score;
};

inline Setup make_setup(const ExperimentConfig& cfg) {
  cfg.validate();
  GmmDistribution gmm = cfg.build_gmm();
  Dataset data = synth_dataset(gmm, cfg.data.n_per_class, cfg.seed);
  AnyEncoder enc = make_encoder(cfg);
  PrototypeSet protos = PrototypeSet::from_class_means(enc, class_means(data));
  CosineClassifier<AnyEncoder> clf(std::move(enc), std::move(protos));
  ScoreFn score = make_gmm_score(gmm, cfg.schedule);
  return Setup{std::move(gmm), std::move(data), std::move(clf), std::move(score)};
}

template <class Clf>
double accuracy_percent(const Clf& clf, const std::vector<Vector>& xs, const std::vector<std::size_t>& ys) {
  if (xs.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) hit += clf.predict(xs[i]) == ys[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(xs.size());
}

inline Tensor column_tensor(const std::vector<double>& v) {
  Tensor t;
  t.shape = {v.size(), 1};
  for (double x : v) t.data.push_back(static_cast<float>(x));
  return t;
}

struct RunOptions {
  bool write_artifacts = true;
};

namespace detail {

class StageClock {
 public:
  explicit StageClock(ExperimentReport& rep) : rep_(rep) {}

  template <class F>
  auto run(const std::string& stage, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        body();
        record(stage, start);
      } else {
        auto out = body();
        record(stage, start);
        return out;
      }
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

 private:
  void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    rep_.timings.emplace_back(stage, dt.count());
  }

  ExperimentReport& rep_;
};

}  // namespace detail

/// synth -> prototypes -> clean eval -> attack -> calibrate -> purify (DiffCAP and fixed-t)
/// -> adaptive attack -> certify -> report. Writes tensors and report.json to cfg.output_dir.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out_dir = cfg.output_dir;
  ExperimentReport rep;
  rep.config = cfg.to_json();
  rep.include_timings = cfg.report.include_timings;
  detail::StageClock clock(rep);

  auto save = [&](const std::string& name, const Tensor& t) {
    if (opt.write_artifacts) write_tensor(out_dir / name, t);
  };

  if (opt.write_artifacts) {
    clock.run("output", [&] { fs::create_directories(out_dir); });
  }

  Setup setup = clock.run("synth", [&] {
    Setup s = make_setup(cfg);
    std::vector<double> labels(s.data.y.begin(), s.data.y.end());
    save("clean.f32t", rows_to_tensor(s.data.x));
    save("labels.f32t", column_tensor(labels));
    if (const auto* lin = s.clf.encoder().linear()) save("encoder.f32t", matrix_to_tensor(lin->matrix()));
    return s;
  });
  const auto& clf = setup.clf;
  const auto& ds = setup.data;
  const std::size_t n = ds.size();
  rep.n_examples = n;
  rep.dim = static_cast<std::size_t>(cfg.gmm.dim);
  rep.classes = ds.classes;

  rep.clean_accuracy = clock.run("clean_eval", [&] { return accuracy_percent(clf, ds.x, ds.y); });

  const std::size_t nb = cfg.attack.eps.size();
  std::size_t primary = 0;
  for (std::size_t b = 0; b < nb; ++b)
    if (cfg.attack.eps[b] > cfg.attack.eps[primary]) primary = b;

  std::vector<std::vector<AdversarialExample>> adv(nb);
  clock.run("attack", [&] {
    for (std::size_t b = 0; b < nb; ++b) {
      const AttackConfig ac = cfg.attack_config(cfg.attack.eps[b]);
      std::vector<Vector> rows;
      for (std::size_t i = 0; i < n; ++i) {
        NoiseStream noise(cfg.seed, i, Purpose::kAttack, b);
        adv[b].push_back(pgd(clf, ds.x[i], ds.y[i], ac, noise));
        rows.push_back(adv[b].back().x_adv);
      }
      save("adv_eps" + std::to_string(b) + ".f32t", rows_to_tensor(rows));
    }
  });

  PurifyConfig pcfg = cfg.purify;
  rep.tau_used = pcfg.tau;
  rep.tau_source = "config";
  if (cfg.calibrate.enabled) {
    clock.run("calibrate", [&] {
      std::vector<std::pair<Vector, Vector>> pairs;
      for (std::size_t i : spread_indices(n, static_cast<std::size_t>(cfg.calibrate.n_pairs)))
        pairs.emplace_back(ds.x[i], adv[primary][i].x_adv);
      PairSet ps(std::move(pairs), cfg.attack.eps[primary]);
      CalibrateOptions co;
      co.T = pcfg.T;
      co.significance = cfg.calibrate.alpha;
      co.injection = pcfg.injection;
      co.test = parse_test(cfg.calibrate.test);
      NoiseStream noise(cfg.seed, 0, Purpose::kCalibrate);
      rep.calibration = calibrate_tau(ps, clf.encoder(), cfg.schedule, co, noise);
      rep.calibration_alpha = cfg.calibrate.alpha;
      rep.calibration_test = cfg.calibrate.test;
      if (cfg.use_calibrated_tau) {
        pcfg.tau = rep.calibration->tau;
        rep.tau_used = pcfg.tau;
        rep.tau_source = "calibrated";
      }
    });
  }
  rep.injection = to_string(pcfg.injection);
  rep.fixed_t = cfg.baseline_t;

  clock.run("purify", [&] {
    for (std::size_t b = 0; b < nb; ++b) {
      BudgetResult br;
      br.eps = cfg.attack.eps[b];
      br.n = n;
      std::vector<Vector> xa, xd, xf;
      std::vector<double> t_stop, steps;
      double linf = 0.0, l2 = 0.0, success = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& a = adv[b][i];
        xa.push_back(a.x_adv);
        linf += a.linf_norm;
        l2 += a.l2_norm;
        success += a.success ? 1.0 : 0.0;
        NoiseStream dn(cfg.seed, i, Purpose::kInject, b);
        auto pr = diffcap_purify(a.x_adv, clf.encoder(), cfg.schedule, setup.score, pcfg, dn);
        xd.push_back(std::move(pr.x_clean));
        t_stop.push_back(pr.t_stop);
        steps.push_back(pr.steps_used);
        NoiseStream fn(cfg.seed, i, Purpose::kFixedBaseline, b);
        xf.push_back(fixed_t_purify(a.x_adv, cfg.schedule, setup.score, cfg.baseline_t, pcfg.reverse, fn).x_clean);
      }
      br.attacked_accuracy = accuracy_percent(clf, xa, ds.y);
      br.diffcap_accuracy = accuracy_percent(clf, xd, ds.y);
      br.fixed_t_accuracy = accuracy_percent(clf, xf, ds.y);
      br.attack_success_rate = success / static_cast<double>(n);
      br.mean_linf = linf / static_cast<double>(n);
      br.mean_l2 = l2 / static_cast<double>(n);
      br.t_stop = stats::summarize(t_stop);
      br.mean_steps = stats::summarize(steps).mean;
      const std::string tag = "_eps" + std::to_string(b) + ".f32t";
      save("diffcap" + tag, rows_to_tensor(xd));
      save("fixed_t" + tag, rows_to_tensor(xf));
      save("t_stop" + tag, column_tensor(t_stop));
      rep.budgets.push_back(br);
    }
  });

  if (cfg.adaptive.enabled) {
    clock.run("adaptive", [&] {
      AdaptiveResult ar;
      ar.enabled = true;
      ar.eps = cfg.attack.eps[primary];
      ar.mode = cfg.adaptive.mode;
      ar.eot_samples = cfg.adaptive.eot_samples;
      ar.steps = cfg.adaptive.steps;
      const auto idx = spread_indices(n, static_cast<std::size_t>(cfg.adaptive.n_points));
      ar.n_points = idx.size();
      AttackConfig ac = cfg.attack_config(ar.eps);
      ac.n_steps = cfg.adaptive.steps;
      const AdaptiveMode mode = ar.mode == "bpda" ? AdaptiveMode::kBpda : AdaptiveMode::kBpdaEot;
      const Purifier purifier = [&](const Vector& x, NoiseStream& noise) {
        return diffcap_purify(x, clf.encoder(), cfg.schedule, setup.score, pcfg, noise).x_clean;
      };
      std::vector<Vector> undefended, vs_pgd, vs_adaptive;
      std::vector<std::size_t> ys;
      for (std::size_t i : idx) {
        ys.push_back(ds.y[i]);
        undefended.push_back(adv[primary][i].x_adv);
        NoiseStream pn(cfg.seed, i, Purpose::kInject, primary);
        vs_pgd.push_back(purifier(adv[primary][i].x_adv, pn));
        NoiseStream an(cfg.seed, i, Purpose::kEot);
        const auto a = adaptive_attack(clf, purifier, ds.x[i], ds.y[i], ac, mode, ar.eot_samples, an);
        NoiseStream en(cfg.seed, i, Purpose::kInject, 1000 + primary);
        vs_adaptive.push_back(purifier(a.x_adv, en));
      }
      ar.undefended_accuracy = accuracy_percent(clf, undefended, ys);
      ar.diffcap_vs_pgd_accuracy = accuracy_percent(clf, vs_pgd, ys);
      ar.diffcap_vs_adaptive_accuracy = accuracy_percent(clf, vs_adaptive, ys);
      rep.adaptive = ar;
    });
  }

  if (cfg.certify.n_points > 0) {
    clock.run("certify", [&] {
      for (std::size_t i : spread_indices(n, static_cast<std::size_t>(cfg.certify.n_points))) {
        CertificateSummary cs;
        cs.index = i;
        cs.label = ds.y[i];
        cs.eps_l2 = adv[primary][i].l2_norm;
        NoiseStream noise(cfg.seed, i, Purpose::kCertify);
        cs.smoothing = estimate_class_probs(clf, ds.x[i], cfg.schedule, cfg.certify.t_grid, cfg.certify.n_mc,
                                            cfg.certify.confidence, noise);
        if (cs.smoothing.p1_lower > cs.smoothing.p2_upper)
          cs.certificate = compute_certificate(cfg.schedule, cs.eps_l2, cs.smoothing.p1_lower, cs.smoothing.p2_upper);
        rep.certificates.push_back(std::move(cs));
      }
    });
  }

  if (opt.write_artifacts) {
    clock.run("report", [&] {
      const std::string text = dump_report(rep);
      validate_report(nlohmann::json::parse(text));
      write_text(out_dir / "report.json", text);
    });
    ojson t = ojson::object();
    for (const auto& [k, v] : rep.timings) t[k] = v;
    write_text(out_dir / "timings.json", t.dump(2) + "\n");
  }
  return rep;
}

struct TheoryCheckResult {
  theory::MonitorCheck monitor;
  theory::LipschitzEstimate lipschitz;
  theory::DriftCurve drift;
  double drift_spearman = 0.0;
  bool drift_decreasing = false;
  bool drift_below_bound = false;
  theory::ConvergenceReport convergence;
  bool passed = false;
};

/// Monitor monotonicity, drift curve against its bound, and convergence near t = 1, all
/// at x0 = the first mixture mean (clamped).
inline TheoryCheckResult run_theory_check(const ExperimentConfig& cfg) {
  cfg.validate();
  const GmmDistribution gmm = cfg.build_gmm();
  const AnyEncoder enc = make_encoder(cfg);
  const Vector x0 = clamp_to_box(gmm.means().front());
  TheoryCheckResult r;
  r.monitor = theory::monitor_decreasing_check(cfg.schedule, cfg.theory.monitor_resolution);
  NoiseStream ln(cfg.seed, 0, Purpose::kTheory);
  r.lipschitz = theory::lipschitz_estimate(enc, 4.0, cfg.theory.lipschitz_pairs, ln);
  const double L = r.lipschitz.operator_norm.value_or(r.lipschitz.estimate);
  NoiseStream dn(cfg.seed, 1, Purpose::kTheory);
  r.drift = theory::embedding_drift_curve(enc, x0, cfg.schedule, cfg.theory.delta, cfg.theory.t_grid, cfg.theory.n_mc,
                                          L, dn);
  std::vector<double> ts, est;
  r.drift_below_bound = true;
  for (const auto& p : r.drift.points) {
    ts.push_back(p.t);
    est.push_back(p.estimate);
    r.drift_below_bound = r.drift_below_bound && p.estimate <= p.bound;
  }
  r.drift_spearman = ts.size() >= 2 ? stats::spearman(ts, est) : 0.0;
  r.drift_decreasing = r.drift_spearman < -0.9;
  NoiseStream cn(cfg.seed, 2, Purpose::kTheory);
  r.convergence = theory::convergence_check(enc, x0, cfg.schedule, {{0.9, 0.95}, {0.95, 0.99}, {0.99, 1.0}},
                                            cfg.theory.n_mc, cfg.theory.convergence_ceiling, cn);
  r.passed = r.monitor.passed && r.drift_decreasing && r.drift_below_bound && r.convergence.passed;
  return r;
}

inline ojson to_json(const TheoryCheckResult& r) {
  ojson conv = ojson::array();
  for (const auto& p : r.convergence.points) conv.push_back({{"t1", p.t1}, {"t2", p.t2}, {"estimate", p.estimate}});
  ojson lip{{"estimate", r.lipschitz.estimate}, {"pairs_used", r.lipschitz.pairs_used}};
  lip["operator_norm"] = r.lipschitz.operator_norm ? ojson(*r.lipschitz.operator_norm) : ojson(nullptr);
  return ojson{{"schema_version", kReportSchemaVersion},
               {"tool", {{"name", "diffcap"}, {"version", DIFFCAP_VERSION}}},
               {"passed", r.passed},
               {"monitor",
                {{"passed", r.monitor.passed},
                 {"resolution", r.monitor.resolution},
                 {"worst_adjacent_ratio", r.monitor.worst_adjacent_ratio},
                 {"log_derivative_negative", r.monitor.log_derivative_negative},
                 {"max_log_derivative", r.monitor.max_log_derivative},
                 {"constant_schedule", r.monitor.constant_schedule}}},
               {"lipschitz", lip},
               {"drift", to_json(r.drift)},
               {"drift_spearman", r.drift_spearman},
               {"drift_decreasing", r.drift_decreasing},
               {"drift_below_bound", r.drift_below_bound},
               {"convergence",
                {{"passed", r.convergence.passed},
                 {"decreasing", r.convergence.decreasing},
                 {"below_ceiling", r.convergence.below_ceiling},
                 {"ceiling", r.convergence.ceiling},
                 {"points", conv}}}};
}

/// CSV with columns t, estimate, bound.
inline std::string drift_csv(const theory::DriftCurve& c) {
  std::ostringstream out;
  out.precision(17);
  out << "t,estimate,bound\n";
  for (const auto& p : c.points) out << p.t << ',' << p.estimate << ',' << p.bound << '\n';
  return out.str();
}

}  // namespace diffcap
