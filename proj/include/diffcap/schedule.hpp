#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "diffcap/types.hpp"

namespace diffcap {

/// Linear noise schedule beta(t) = beta_min + (beta_max - beta_min) t on diffusion time t in [0,1].
///
/// All closed-form scalars of the variance-preserving process derive from it:
///   alpha(t)    = exp(-beta_min t - (beta_max - beta_min) t^2 / 2)   signal retention
///   sigma_sq(t) = (1 - alpha) / alpha                                 equivalent additive variance
///   monitor(t)  = beta(t) sqrt(alpha / (1 - alpha))                   drift-rate envelope
class LinearSchedule {
 public:
  static constexpr double kDefaultBetaMin = 0.1;
  static constexpr double kDefaultBetaMax = 20.0;

  LinearSchedule() : LinearSchedule(kDefaultBetaMin, kDefaultBetaMax) {}

  LinearSchedule(double beta_min, double beta_max) : beta_min_(beta_min), beta_max_(beta_max) {
    if (!(std::isfinite(beta_min) && std::isfinite(beta_max)))
      throw DomainError("LinearSchedule: non-finite rate");
    if (!(beta_min > 0.0)) throw DomainError("LinearSchedule: beta_min must be > 0");
    if (!(beta_max >= beta_min)) throw DomainError("LinearSchedule: beta_max must be >= beta_min");
  }

  double beta_min() const noexcept { return beta_min_; }
  double beta_max() const noexcept { return beta_max_; }
  double slope() const noexcept { return beta_max_ - beta_min_; }

  double beta(double t) const {
    check_time(t, "beta");
    return beta_min_ + slope() * t;
  }

  /// Integral of beta over [0, t].
  double integrated_beta(double t) const {
    check_time(t, "integrated_beta");
    return beta_min_ * t + 0.5 * slope() * t * t;
  }

  double alpha(double t) const { return std::exp(-integrated_beta(t)); }

  double sigma_sq(double t) const {
    // expm1 keeps (1 - alpha)/alpha = exp(I) - 1 accurate for small t.
    return std::expm1(integrated_beta(t));
  }

  double sigma(double t) const { return std::sqrt(sigma_sq(t)); }

  /// 1 - alpha(t) without cancellation.
  double one_minus_alpha(double t) const { return -std::expm1(-integrated_beta(t)); }

  /// VP drift f(x,t) = -beta(t) x / 2 and diffusion g(t) = sqrt(beta(t)).
  std::pair<Vector, double> drift_diffusion(const Vector& x, double t) const {
    const double b = beta(t);
    return {-0.5 * b * x, std::sqrt(b)};
  }

  /// f(t) = beta(t) sqrt(alpha/(1-alpha)); diverges at t = 0.
  double monitor(double t) const {
    if (!(t > 0.0)) throw DomainError("monitor: t must be > 0 (f diverges at 0)");
    check_time(t, "monitor");
    const double om = one_minus_alpha(t);
    if (!(om > 0.0)) throw DomainError("monitor: alpha(t) == 1");
    return beta(t) * std::sqrt(alpha(t) / om);
  }

  /// d/dt log f(t) = beta'/beta - beta / (2 (1 - alpha)); negative on (0,1].
  double log_monitor_derivative(double t) const {
    if (!(t > 0.0)) throw DomainError("log_monitor_derivative: t must be > 0");
    const double b = beta(t);
    return slope() / b - b / (2.0 * one_minus_alpha(t));
  }

  /// Smallest t with integrated_beta(t) = level (root of the quadratic), for level >= 0.
  double time_for_integrated_beta(double level) const {
    if (!(level >= 0.0)) throw DomainError("time_for_integrated_beta: level must be >= 0");
    // Rationalized root: 2 level / (sqrt(bmin^2 + 2 slope level) + bmin).
    return 2.0 * level / (std::sqrt(beta_min_ * beta_min_ + 2.0 * slope() * level) + beta_min_);
  }

  friend bool operator==(const LinearSchedule&, const LinearSchedule&) = default;

 private:
  static void check_time(double t, const char* op) {
    if (!(t >= 0.0 && t <= 1.0))
      throw DomainError(std::string(op) + ": diffusion time " + std::to_string(t) +
                        " outside [0,1]");
  }

  double beta_min_;
  double beta_max_;
};

}  // namespace diffcap
