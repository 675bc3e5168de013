#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "diffcap/embed.hpp"
#include "diffcap/schedule.hpp"
#include "diffcap/sde.hpp"
#include "diffcap/stats.hpp"

namespace diffcap {

/// p1 <= p2: the quantile gap in the certificate is not positive.
class DegenerateMarginError : public DomainError {
 public:
  using DomainError::DomainError;
};

struct SmoothingAtTime {
  double t;
  std::vector<std::uint64_t> counts;  // per class
  double p1_lower;
  double p2_upper;
  bool condition_holds;  // p1_lower > p2_upper at this t
};

/// Worst-case (over the grid) Clopper-Pearson bounds on the class probabilities of
/// h(x + eps'), eps' ~ N(0, sigma^2(t) I).
struct SmoothingEstimate {
  std::size_t k1 = 0;
  double p1_lower = 0.0;
  double p2_upper = 1.0;
  std::uint64_t n_samples = 0;
  double confidence = 0.999;
  std::vector<double> t_grid;
  std::vector<SmoothingAtTime> per_t;
};

template <Encoder E>
SmoothingEstimate estimate_class_probs(const CosineClassifier<E>& clf, const Vector& x, const LinearSchedule& s,
                                       const std::vector<double>& t_grid, std::uint64_t n_mc, double confidence,
                                       NoiseStream& noise) {
  if (n_mc < 100) throw DomainError("estimate_class_probs: n_mc must be >= 100");
  if (t_grid.empty()) throw DomainError("estimate_class_probs: empty t grid");
  const std::size_t K = clf.classes();
  SmoothingEstimate est;
  est.k1 = clf.predict(x);
  est.n_samples = n_mc;
  est.confidence = confidence;
  est.t_grid = t_grid;
  est.p1_lower = 1.0;
  est.p2_upper = 0.0;
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    const double sigma = s.sigma(t_grid[g]);
    NoiseStream stream = noise.child(Purpose::kCertify, g);
    std::vector<std::uint64_t> counts(K, 0);
    for (std::uint64_t i = 0; i < n_mc; ++i) ++counts[clf.predict(x + sigma * stream.normal_vector(x.size()))];
    std::size_t runner = est.k1 == 0 ? 1 : 0;
    for (std::size_t k = 0; k < K; ++k)
      if (k != est.k1 && counts[k] > counts[runner]) runner = k;
    SmoothingAtTime at{t_grid[g], counts, 0.0, 0.0, false};
    at.p1_lower = stats::clopper_pearson(counts[est.k1], n_mc, confidence).lower;
    at.p2_upper = stats::clopper_pearson(counts[runner], n_mc, confidence).upper;
    at.condition_holds = at.p1_lower > at.p2_upper;
    est.p1_lower = std::min(est.p1_lower, at.p1_lower);
    est.p2_upper = std::max(est.p2_upper, at.p2_upper);
    est.per_t.push_back(std::move(at));
  }
  return est;
}

/// Certified recovery region of the noised classifier for a perturbation of l2 norm eps:
///   gap   = Phi^-1(p1) - Phi^-1(p2)
///   M     = log(1 + (2 eps / gap)^2)
///   t_min = 2M / (sqrt(beta_min^2 + 2 (beta_max - beta_min) M) + beta_min)
/// valid iff beta_min >= M and t_min <= 1. radius_at(t) = sigma(t) gap / 2.
struct Certificate {
  double eps_l2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double quantile_gap = 0.0;
  double M = 0.0;
  double t_min = 0.0;
  bool valid = false;
  LinearSchedule schedule;

  double radius_at(double t) const { return 0.5 * schedule.sigma(t) * quantile_gap; }
};

inline Certificate compute_certificate(const LinearSchedule& s, double eps_l2, double p1, double p2) {
  if (!(eps_l2 >= 0.0) || !std::isfinite(eps_l2)) throw DomainError("compute_certificate: eps_l2 must be >= 0");
  if (!(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0))
    throw DomainError("compute_certificate: probabilities must lie in (0,1)");
  if (!(p1 > p2)) throw DegenerateMarginError("compute_certificate: p1 must exceed p2");
  Certificate c;
  c.schedule = s;
  c.eps_l2 = eps_l2;
  c.p1 = p1;
  c.p2 = p2;
  c.quantile_gap = stats::gaussian_quantile(p1) - stats::gaussian_quantile(p2);
  if (!(c.quantile_gap > 0.0)) throw DegenerateMarginError("compute_certificate: non-positive quantile gap");
  const double ratio = 2.0 * eps_l2 / c.quantile_gap;
  c.M = std::log1p(ratio * ratio);
  c.t_min = s.time_for_integrated_beta(c.M);
  c.valid = s.beta_min() >= c.M && c.t_min <= 1.0;
  return c;
}

struct VerificationReport {
  double t = 0.0;
  double eps_l2 = 0.0;
  std::size_t label = 0;           // h(x)
  std::size_t majority = 0;        // most frequent class of h(x_adv(t))
  std::uint64_t label_count = 0;
  std::uint64_t n = 0;
  double label_fraction = 0.0;
  double label_lower = 0.0;        // Clopper-Pearson lower bound on P(h(x_adv(t)) = label)
  bool passed = false;
};

/// Monte-Carlo check of the recovery claim at x_adv = x + eps_l2 * direction: sample the
/// forward marginal at t, classify, and pass iff the clean label is the majority with the
/// lower confidence bound of its frequency above 1/2.
template <Encoder E>
VerificationReport verify_certificate(const CosineClassifier<E>& clf, const Vector& x, const Vector& direction,
                                      double eps_l2, double t, std::uint64_t n_mc, const LinearSchedule& s,
                                      NoiseStream& noise, double confidence = 0.999) {
  if (!(t > 0.0 && t <= 1.0)) throw DomainError("verify_certificate: t must lie in (0,1]");
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw DomainError("verify_certificate: direction must be unit norm");
  if (!(eps_l2 >= 0.0)) throw DomainError("verify_certificate: eps_l2 must be >= 0");
  if (n_mc < 1) throw DomainError("verify_certificate: n_mc must be >= 1");
  check_same_dim(x, direction, "verify_certificate");
  const Vector x_adv = x + eps_l2 * direction;
  VerificationReport rep;
  rep.t = t;
  rep.eps_l2 = eps_l2;
  rep.label = clf.predict(x);
  rep.n = n_mc;
  std::vector<std::uint64_t> counts(clf.classes(), 0);
  for (std::uint64_t i = 0; i < n_mc; ++i) ++counts[clf.predict(forward_sample(x_adv, t, s, noise))];
  rep.majority = 0;
  for (std::size_t k = 1; k < counts.size(); ++k)
    if (counts[k] > counts[rep.majority]) rep.majority = k;
  rep.label_count = counts[rep.label];
  rep.label_fraction = static_cast<double>(rep.label_count) / static_cast<double>(n_mc);
  rep.label_lower = stats::clopper_pearson(rep.label_count, n_mc, confidence).lower;
  rep.passed = rep.majority == rep.label && rep.label_lower > 0.5;
  return rep;
}

}  // namespace diffcap
