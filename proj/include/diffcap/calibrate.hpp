#pragma once

#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "diffcap/embed.hpp"
#include "diffcap/purify.hpp"
#include "diffcap/stats.hpp"

namespace diffcap {

/// Clean/adversarial pairs with a declared l_inf budget.
class PairSet {
 public:
  PairSet(std::vector<std::pair<Vector, Vector>> pairs, double budget) : pairs_(std::move(pairs)), budget_(budget) {
    if (pairs_.empty()) throw DomainError("PairSet: empty");
    if (!(budget >= 0.0)) throw DomainError("PairSet: budget must be >= 0");
    const auto d = pairs_.front().first.size();
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      const auto& [c, a] = pairs_[i];
      if (c.size() != d || a.size() != d) throw DimensionError("PairSet: pair " + std::to_string(i) + " dimension");
      if (d > 0 && (a - c).cwiseAbs().maxCoeff() > budget + 1e-9)
        throw DomainError("PairSet: pair " + std::to_string(i) + " exceeds the declared budget");
    }
  }

  std::size_t size() const noexcept { return pairs_.size(); }
  double budget() const noexcept { return budget_; }
  const std::pair<Vector, Vector>& operator[](std::size_t i) const { return pairs_.at(i); }
  const std::vector<std::pair<Vector, Vector>>& pairs() const noexcept { return pairs_; }

 private:
  std::vector<std::pair<Vector, Vector>> pairs_;
  double budget_;
};

enum class SameDistributionTest { kKolmogorovSmirnov, kPermutation };

inline SameDistributionTest parse_test(const std::string& s) {
  if (s == "ks") return SameDistributionTest::kKolmogorovSmirnov;
  if (s == "permutation") return SameDistributionTest::kPermutation;
  throw DomainError("unknown calibration test '" + s + "' (expected ks|permutation)");
}

inline const char* to_string(SameDistributionTest t) {
  return t == SameDistributionTest::kKolmogorovSmirnov ? "ks" : "permutation";
}

struct CalibrationStep {
  double t;
  double statistic;
  double p_value;
  double mean_clean;
  double mean_adv;
};

struct CalibrationReport {
  double tau = 0.0;
  double t_star = 1.0;      // time at which the similarity sets became indistinguishable
  bool converged = false;   // false: never indistinguishable, stopped at t = 1
  std::size_t n_pairs = 0;
  std::vector<CalibrationStep> per_step;
  std::vector<double> final_clean;  // S_clean at the stopping step
  std::vector<double> final_adv;    // S_adv at the stopping step
};

struct CalibrateOptions {
  int T = 100;
  double significance = 0.05;
  InjectionMode injection = InjectionMode::kShared;
  SameDistributionTest test = SameDistributionTest::kKolmogorovSmirnov;
  int permutation_shuffles = 1000;
};

/// Threshold selection: inject noise into every clean and adversarial image one level at a
/// time, collect consecutive-embedding cosines into S_clean and S_adv, and stop at the first
/// level where the two-sample test cannot tell them apart (p >= significance). Returns
/// tau = mean(S_clean) at that level. Both images of pair i draw from the same stream.
template <Encoder E>
CalibrationReport calibrate_tau(const PairSet& pairs, const E& encoder, const LinearSchedule& s,
                                const CalibrateOptions& opt, NoiseStream& noise) {
  if (opt.T < 1) throw DomainError("calibrate: T must be >= 1");
  if (!(opt.significance > 0.0 && opt.significance < 1.0)) throw DomainError("calibrate: significance in (0,1)");
  const std::size_t n = pairs.size();
  std::vector<InjectionPath> clean_paths, adv_paths;
  std::vector<Vector> prev_clean, prev_adv;
  clean_paths.reserve(n);
  adv_paths.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NoiseStream stream = noise.child(Purpose::kCalibrate, i);
    clean_paths.emplace_back(pairs[i].first, s, opt.T, opt.injection, stream);
    adv_paths.emplace_back(pairs[i].second, s, opt.T, opt.injection, stream);
    prev_clean.push_back(encoder.encode(pairs[i].first));
    prev_adv.push_back(encoder.encode(pairs[i].second));
  }

  CalibrationReport rep;
  rep.n_pairs = n;
  std::vector<double> sc(n), sa(n);
  for (int k = 1; k <= opt.T; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      Vector ec = encoder.encode(clean_paths[i].advance());
      Vector ea = encoder.encode(adv_paths[i].advance());
      try {
        sc[i] = cosine(ec, prev_clean[i]);
        sa[i] = cosine(ea, prev_adv[i]);
      } catch (const UndefinedSimilarityError&) {
        throw UndefinedSimilarityError("calibrate: zero embedding for pair " + std::to_string(i) + " at step " +
                                       std::to_string(k));
      }
      prev_clean[i] = std::move(ec);
      prev_adv[i] = std::move(ea);
    }
    stats::TestResult tr;
    if (opt.test == SameDistributionTest::kKolmogorovSmirnov) {
      tr = stats::ks_two_sample(sc, sa);
    } else {
      NoiseStream perm = noise.child(Purpose::kPermutation, static_cast<std::uint64_t>(k));
      tr = stats::permutation_test(sc, sa, opt.permutation_shuffles, perm);
    }
    const double t = static_cast<double>(k) / opt.T;
    const double mc = std::accumulate(sc.begin(), sc.end(), 0.0) / static_cast<double>(n);
    const double ma = std::accumulate(sa.begin(), sa.end(), 0.0) / static_cast<double>(n);
    rep.per_step.push_back({t, tr.statistic, tr.p_value, mc, ma});
    rep.tau = mc;
    rep.t_star = t;
    if (tr.p_value >= opt.significance) {
      rep.converged = true;
      break;
    }
  }
  rep.final_clean = sc;
  rep.final_adv = sa;
  return rep;
}

}  // namespace diffcap
