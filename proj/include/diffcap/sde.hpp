#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "diffcap/rng.hpp"
#include "diffcap/schedule.hpp"
#include "diffcap/types.hpp"

namespace diffcap {

// ---------------------------------------------------------------------------------------------
// Forward process

/// Draw from the closed-form marginal: sqrt(alpha) x0 + sqrt(1 - alpha) eps.
inline Vector forward_sample(const Vector& x0, double t, const LinearSchedule& s, NoiseStream& noise) {
  const double a = s.alpha(t);
  return std::sqrt(a) * x0 + std::sqrt(s.one_minus_alpha(t)) * noise.normal_vector(x0.size());
}

/// Same as forward_sample with a caller-supplied eps (the shared-noise path).
inline Vector forward_with_noise(const Vector& x0, const Vector& eps, double t, const LinearSchedule& s) {
  check_same_dim(x0, eps, "forward_with_noise");
  return std::sqrt(s.alpha(t)) * x0 + std::sqrt(s.one_minus_alpha(t)) * eps;
}

/// Exact VP transition kernel from t to t + dt.
inline Vector transition_step(const Vector& x_t, double t, double dt, const LinearSchedule& s,
                              NoiseStream& noise) {
  if (!(dt > 0.0)) throw DomainError("transition_step: increment must be > 0");
  if (!(t >= 0.0 && t + dt <= 1.0 + 1e-12))
    throw DomainError("transition_step: [t, t+dt] must lie in [0,1]");
  const double t1 = std::min(t + dt, 1.0);
  const double log_ratio = s.integrated_beta(t) - s.integrated_beta(t1);  // log(alpha(t1)/alpha(t))
  const double keep = std::exp(0.5 * log_ratio);
  const double inject = std::sqrt(-std::expm1(log_ratio));
  return keep * x_t + inject * noise.normal_vector(x_t.size());
}

/// Times and states of a sampled path.
class Trajectory {
 public:
  void push(double t, Vector x) {
    if (!times_.empty()) {
      if (!(t > times_.back())) throw DomainError("Trajectory: times must be strictly increasing");
      check_same_dim(states_.front(), x, "Trajectory");
    }
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError("Trajectory: time outside [0,1]");
    times_.push_back(t);
    states_.push_back(std::move(x));
  }

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<Vector>& states() const noexcept { return states_; }
  std::size_t size() const noexcept { return times_.size(); }

 private:
  std::vector<double> times_;
  std::vector<Vector> states_;
};

/// Markov forward path x(0) = x0, x(k/T) for k = 1..T.
inline Trajectory forward_trajectory(const Vector& x0, int T, const LinearSchedule& s, NoiseStream& noise) {
  if (T < 1) throw DomainError("forward_trajectory: T must be >= 1");
  Trajectory traj;
  traj.push(0.0, x0);
  Vector x = x0;
  for (int k = 1; k <= T; ++k) {
    const double t0 = static_cast<double>(k - 1) / T;
    x = transition_step(x, t0, 1.0 / T, s, noise);
    traj.push(static_cast<double>(k) / T, x);
  }
  return traj;
}

// ---------------------------------------------------------------------------------------------
// Gaussian mixtures with diagonal covariances

/// Mixture sum_k w_k N(mean_k, diag(var_k)); the analytic stand-in for a trained score model.
class GmmDistribution {
 public:
  GmmDistribution(std::vector<double> weights, std::vector<Vector> means, std::vector<Vector> variances)
      : weights_(std::move(weights)), means_(std::move(means)), vars_(std::move(variances)) {
    if (weights_.empty()) throw DomainError("GmmDistribution: no components");
    if (means_.size() != weights_.size() || vars_.size() != weights_.size())
      throw DimensionError("GmmDistribution: weights/means/variances length mismatch");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("GmmDistribution: weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("GmmDistribution: weights must sum to 1");
    const auto d = means_.front().size();
    if (d == 0) throw DimensionError("GmmDistribution: zero dimension");
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      if (means_[k].size() != d || vars_[k].size() != d)
        throw DimensionError("GmmDistribution: component " + std::to_string(k) + " has wrong dimension");
      if (!means_[k].allFinite()) throw DomainError("GmmDistribution: non-finite mean");
      if (!(vars_[k].allFinite() && vars_[k].minCoeff() > 0.0))
        throw DomainError("GmmDistribution: variances must be strictly positive");
    }
  }

  std::size_t components() const noexcept { return weights_.size(); }
  Eigen::Index dim() const noexcept { return means_.front().size(); }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<Vector>& means() const noexcept { return means_; }
  const std::vector<Vector>& variances() const noexcept { return vars_; }

  /// log(w_k) + log N(x; mean_k, var_k) for every component.
  std::vector<double> component_log_joint(const Vector& x) const {
    check_same_dim(x, means_.front(), "GmmDistribution");
    std::vector<double> out(components());
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (std::size_t k = 0; k < components(); ++k) {
      const auto& v = vars_[k];
      const double quad = ((x - means_[k]).array().square() / v.array()).sum();
      const double logdet = v.array().log().sum();
      out[k] = std::log(weights_[k]) - 0.5 * (quad + logdet + static_cast<double>(dim()) * log2pi);
    }
    return out;
  }

  double log_density(const Vector& x) const {
    const auto lj = component_log_joint(x);
    return log_sum_exp(lj);
  }

  /// Posterior responsibilities p(k | x).
  std::vector<double> responsibilities(const Vector& x) const {
    auto lj = component_log_joint(x);
    const double lse = log_sum_exp(lj);
    for (double& v : lj) v = std::exp(v - lse);
    return lj;
  }

  /// grad_x log p(x), stabilized with log-sum-exp responsibilities.
  Vector score(const Vector& x) const {
    if (!x.allFinite()) throw DomainError("GmmDistribution::score: non-finite input");
    const auto r = responsibilities(x);
    Vector g = Vector::Zero(dim());
    for (std::size_t k = 0; k < components(); ++k)
      g.array() -= r[k] * (x - means_[k]).array() / vars_[k].array();
    return g;
  }

  Vector sample(NoiseStream& noise, std::size_t* component = nullptr) const {
    const double u = noise.uniform();
    std::size_t k = 0;
    double acc = weights_[0];
    while (u >= acc && k + 1 < components()) acc += weights_[++k];
    if (component) *component = k;
    return sample_component(k, noise);
  }

  Vector sample_component(std::size_t k, NoiseStream& noise) const {
    return means_.at(k) + (vars_[k].array().sqrt() * noise.normal_vector(dim()).array()).matrix();
  }

  static double log_sum_exp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
  }

 private:
  std::vector<double> weights_;
  std::vector<Vector> means_;
  std::vector<Vector> vars_;
};

/// Exact marginal p_t of the VP process started from p0: means scale by sqrt(alpha),
/// variances become alpha v + (1 - alpha), weights are unchanged.
inline GmmDistribution gmm_marginal(const GmmDistribution& p0, double t, const LinearSchedule& s) {
  const double a = s.alpha(t);
  const double om = s.one_minus_alpha(t);
  std::vector<Vector> means, vars;
  means.reserve(p0.components());
  vars.reserve(p0.components());
  for (std::size_t k = 0; k < p0.components(); ++k) {
    means.push_back(std::sqrt(a) * p0.means()[k]);
    vars.push_back((a * p0.variances()[k].array() + om).matrix());
  }
  return GmmDistribution(p0.weights(), std::move(means), std::move(vars));
}

inline Vector analytic_score(const GmmDistribution& p0, const Vector& x, double t, const LinearSchedule& s) {
  if (!x.allFinite()) throw DomainError("analytic_score: non-finite state");
  return gmm_marginal(p0, t, s).score(x);
}

/// Score model signature s(x, t) ~ grad_x log p_t(x).
using ScoreFn = std::function<Vector(const Vector&, double)>;

/// Binds a mixture and schedule into a ScoreFn.
inline ScoreFn make_gmm_score(GmmDistribution p0, LinearSchedule s) {
  return [p0 = std::move(p0), s](const Vector& x, double t) { return analytic_score(p0, x, t, s); };
}

// ---------------------------------------------------------------------------------------------
// Reverse-time integration

enum class ReverseMode { kStochastic, kProbabilityFlow };

inline const char* to_string(ReverseMode m) {
  return m == ReverseMode::kStochastic ? "stochastic" : "probability-flow";
}

/// Integrates the reverse-time VP equation from t_start down to 0 with n_steps uniform
/// Euler(-Maruyama) steps of size h = t_start / n_steps:
///
///   stochastic:        x <- x - [f - g^2 s] h + g sqrt(h) z
///   probability-flow:  x <- x - [f - g^2 s / 2] h
///
/// The score is evaluated at t_start, t_start - h, ..., h (never at t = 0).
inline Vector reverse_integrate(const Vector& x_t, double t_start, const LinearSchedule& s,
                                const ScoreFn& score, int n_steps, ReverseMode mode, NoiseStream& noise) {
  if (!(t_start > 0.0 && t_start <= 1.0)) throw DomainError("reverse_integrate: t_start must be in (0,1]");
  if (n_steps < 1) throw DomainError("reverse_integrate: n_steps must be >= 1");
  if (!x_t.allFinite()) throw IntegrationError("reverse_integrate: non-finite initial state", 0);
  const double h = t_start / n_steps;
  const double score_weight = mode == ReverseMode::kStochastic ? 1.0 : 0.5;
  Vector x = x_t;
  for (int i = 0; i < n_steps; ++i) {
    const double t = t_start - i * h;
    const double b = s.beta(t);
    const Vector sc = score(x, t);
    if (sc.size() != x.size()) throw DimensionError("reverse_integrate: score has wrong dimension");
    if (!sc.allFinite())
      throw IntegrationError("reverse_integrate: score returned non-finite values", static_cast<std::size_t>(i));
    const Vector drift = -0.5 * b * x - score_weight * b * sc;
    x -= drift * h;
    if (mode == ReverseMode::kStochastic) x += std::sqrt(b * h) * noise.normal_vector(x.size());
    if (!x.allFinite())
      throw IntegrationError("reverse_integrate: state became non-finite", static_cast<std::size_t>(i));
  }
  return x;
}

}  // namespace diffcap
