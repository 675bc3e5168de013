#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <type_traits>
#include <utility>
#include <vector>

#include "diffcap/embed.hpp"
#include "diffcap/schedule.hpp"
#include "diffcap/sde.hpp"
#include "diffcap/stats.hpp"

namespace diffcap::theory {

/// Largest singular value by power iteration on A^T A.
inline double operator_norm(const Matrix& a, int max_iter = 1000, double tol = 1e-14) {
  if (a.size() == 0) return 0.0;
  Vector v = Vector::Ones(a.cols()) / std::sqrt(static_cast<double>(a.cols()));
  double lambda = 0.0;
  for (int i = 0; i < max_iter; ++i) {
    Vector w = a.transpose() * (a * v);
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    w /= n;
    const double next = std::sqrt(n);
    v = std::move(w);
    if (std::abs(next - lambda) <= tol * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

struct LipschitzEstimate {
  double estimate = 0.0;
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;         // coincident pairs
  std::optional<double> operator_norm;  // linear encoders only
};

/// Black-box Lipschitz estimate over the box [-half_width, half_width]^d: the maximum of
/// ||phi(u) - phi(v)|| / ||u - v|| over sampled pairs. Half the budget samples uniform
/// anchors and directions; the other half refines the best pair with a (1+1) evolution
/// strategy on the direction.
template <Encoder E>
LipschitzEstimate lipschitz_estimate(const E& enc, double half_width, std::size_t n_pairs, NoiseStream& noise) {
  if (n_pairs < 100) throw DomainError("lipschitz_estimate: n_pairs must be >= 100");
  if (!(half_width > 0.0)) throw DomainError("lipschitz_estimate: half_width must be > 0");
  const auto d = enc.input_dim();
  const double h = 0.05 * half_width;
  LipschitzEstimate out;
  auto ratio = [&](const Vector& u, const Vector& dir) -> std::optional<double> {
    const Vector v = u + h * dir;
    const double den = (u - v).norm();
    if (!(den > 0.0)) return std::nullopt;
    return (enc.encode(u) - enc.encode(v)).norm() / den;
  };
  Vector best_u, best_dir;
  double best = -1.0;
  const std::size_t explore = n_pairs / 2;
  for (std::size_t i = 0; i < explore; ++i) {
    Vector u = noise.uniform_vector(d, -half_width, half_width);
    Vector dir = noise.normal_vector(d);
    const double nd = dir.norm();
    if (!(nd > 0.0)) {
      ++out.pairs_skipped;
      continue;
    }
    dir /= nd;
    const auto r = ratio(u, dir);
    if (!r) {
      ++out.pairs_skipped;
      continue;
    }
    ++out.pairs_used;
    if (*r > best) {
      best = *r;
      best_u = std::move(u);
      best_dir = std::move(dir);
    }
  }
  double step = 0.5;
  for (std::size_t i = explore; i < n_pairs && best >= 0.0; ++i) {
    Vector dir = best_dir + step * noise.normal_vector(d) / std::sqrt(static_cast<double>(d));
    const double nd = dir.norm();
    if (!(nd > 0.0)) {
      ++out.pairs_skipped;
      continue;
    }
    dir /= nd;
    const auto r = ratio(best_u, dir);
    if (!r) {
      ++out.pairs_skipped;
      continue;
    }
    ++out.pairs_used;
    if (*r > best) {
      best = *r;
      best_dir = std::move(dir);
      step = std::min(1.0, step * 1.5);
    } else {
      step = std::max(1e-6, step * 0.95);
    }
  }
  out.estimate = std::max(best, 0.0);
  if constexpr (std::is_same_v<E, LinearEncoder>) {
    out.operator_norm = operator_norm(enc.matrix());
  } else if constexpr (std::is_same_v<E, AnyEncoder>) {
    if (const auto* lin = enc.linear()) out.operator_norm = operator_norm(lin->matrix());
  }
  return out;
}

/// Drift-rate envelope used as the bound column:
///   L sqrt(d) delta beta(t) sqrt(alpha/(1-alpha)) / 2
/// (first-order A^2 + B^2 = beta^2 alpha delta^2 / (4(1-alpha)) with ||x0||^2 <= d).
inline double drift_bound(const LinearSchedule& s, double lipschitz, Eigen::Index d, double delta, double t) {
  return 0.5 * lipschitz * std::sqrt(static_cast<double>(d)) * delta * s.monitor(t);
}

struct DriftPoint {
  double t;
  double estimate;  // E ||phi(x(t)) - phi(x(t + delta))||
  double std_error;
  double bound;
};

struct DriftCurve {
  double delta = 0.0;
  std::size_t n_mc = 0;
  double lipschitz = 0.0;
  std::vector<DriftPoint> points;
};

/// Monte-Carlo drift between adjacent noise levels. Both states come from the same eps:
/// x(t) = sqrt(alpha(t)) x0 + sqrt(1 - alpha(t)) eps, x(t + delta) likewise.
template <Encoder E>
DriftCurve embedding_drift_curve(const E& enc, const Vector& x0, const LinearSchedule& s, double delta,
                                 const std::vector<double>& t_grid, std::size_t n_mc, double lipschitz,
                                 NoiseStream& noise) {
  if (n_mc < 100) throw DomainError("embedding_drift_curve: n_mc must be >= 100");
  if (!(delta > 0.0)) throw DomainError("embedding_drift_curve: delta must be > 0");
  DriftCurve curve;
  curve.delta = delta;
  curve.n_mc = n_mc;
  curve.lipschitz = lipschitz;
  for (std::size_t g = 0; g < t_grid.size(); ++g) {
    const double t = t_grid[g];
    if (!(t > 0.0 && t + delta <= 1.0 + 1e-12)) throw DomainError("embedding_drift_curve: need 0 < t, t + delta <= 1");
    const double t2 = std::min(1.0, t + delta);
    NoiseStream stream = noise.child(Purpose::kTheory, g);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
      const Vector eps = stream.normal_vector(x0.size());
      const double v =
          (enc.encode(forward_with_noise(x0, eps, t, s)) - enc.encode(forward_with_noise(x0, eps, t2, s))).norm();
      sum += v;
      sumsq += v * v;
    }
    const double n = static_cast<double>(n_mc);
    const double mean = sum / n;
    const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
    curve.points.push_back({t, mean, std::sqrt(var / n), drift_bound(s, lipschitz, x0.size(), delta, t)});
  }
  return curve;
}

struct MonitorCheck {
  bool passed = false;
  std::size_t resolution = 0;
  double worst_adjacent_ratio = 0.0;  // max f(t_{i+1}) / f(t_i); < 1 when strictly decreasing
  bool log_derivative_negative = false;
  double max_log_derivative = 0.0;    // max over the grid of g(t) = d/dt log f(t)
  bool constant_schedule = false;     // beta_max == beta_min: f is then not strictly decreasing by construction
};

/// Evaluates f(t) = beta sqrt(alpha/(1-alpha)) on `resolution` uniform points of
/// [1e-3, 1 - 1e-3] and checks strict decrease at every adjacent pair plus g(t) < 0.
inline MonitorCheck monitor_decreasing_check(const LinearSchedule& s, std::size_t resolution) {
  if (resolution < 100) throw DomainError("monitor_decreasing_check: resolution must be >= 100");
  MonitorCheck out;
  out.resolution = resolution;
  out.constant_schedule = s.beta_max() == s.beta_min();
  const double lo = 1e-3, hi = 1.0 - 1e-3;
  bool decreasing = true;
  out.worst_adjacent_ratio = 0.0;
  out.max_log_derivative = -std::numeric_limits<double>::infinity();
  double prev = 0.0;
  for (std::size_t i = 0; i < resolution; ++i) {
    const double t = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
    const double f = s.monitor(t);
    out.max_log_derivative = std::max(out.max_log_derivative, s.log_monitor_derivative(t));
    if (i > 0) {
      out.worst_adjacent_ratio = std::max(out.worst_adjacent_ratio, f / prev);
      if (!(f < prev)) decreasing = false;
    }
    prev = f;
  }
  out.log_derivative_negative = out.max_log_derivative < 0.0;
  out.passed = decreasing && out.log_derivative_negative;
  return out;
}

struct ConvergencePoint {
  double t1;
  double t2;
  double estimate;
};

struct ConvergenceReport {
  std::vector<ConvergencePoint> points;
  bool decreasing = false;
  bool below_ceiling = false;
  double ceiling = 0.0;
  bool passed = false;
};

/// E ||phi(x(t1)) - phi(x(t2))|| along a sequence of pairs approaching (1, 1), shared eps.
/// A run of exact zeros (constant encoder) counts as decreasing.
template <Encoder E>
ConvergenceReport convergence_check(const E& enc, const Vector& x0, const LinearSchedule& s,
                                    const std::vector<std::pair<double, double>>& t_pairs, std::size_t n_mc,
                                    double ceiling, NoiseStream& noise) {
  if (t_pairs.empty()) throw DomainError("convergence_check: no time pairs");
  if (n_mc < 1) throw DomainError("convergence_check: n_mc must be >= 1");
  ConvergenceReport rep;
  rep.ceiling = ceiling;
  for (std::size_t g = 0; g < t_pairs.size(); ++g) {
    const auto [t1, t2] = t_pairs[g];
    if (!(t1 > 0.0 && t1 <= 1.0 && t2 > 0.0 && t2 <= 1.0)) throw DomainError("convergence_check: times in (0,1]");
    NoiseStream stream = noise.child(Purpose::kTheory, 1000 + g);
    double sum = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
      const Vector eps = stream.normal_vector(x0.size());
      sum += (enc.encode(forward_with_noise(x0, eps, t1, s)) - enc.encode(forward_with_noise(x0, eps, t2, s))).norm();
    }
    rep.points.push_back({t1, t2, sum / static_cast<double>(n_mc)});
  }
  rep.decreasing = true;
  for (std::size_t i = 1; i < rep.points.size(); ++i)
    if (!(rep.points[i].estimate < rep.points[i - 1].estimate) &&
        !(rep.points[i].estimate == 0.0 && rep.points[i - 1].estimate == 0.0))
      rep.decreasing = false;
  rep.below_ceiling = rep.points.back().estimate <= ceiling;
  rep.passed = rep.decreasing && rep.below_ceiling;
  return rep;
}

}  // namespace diffcap::theory
