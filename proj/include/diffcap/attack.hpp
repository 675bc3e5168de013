#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "diffcap/embed.hpp"
#include "diffcap/rng.hpp"
#include "diffcap/types.hpp"

namespace diffcap {

/// l_inf budget and PGD schedule, all in data units.
struct AttackConfig {
  double epsilon = 0.4;
  double step_size = 0.05;
  int n_steps = 20;
  double temperature = 0.1;
  bool random_start = false;

  void validate() const {
    if (!(epsilon >= 0.0)) throw DomainError("attack: epsilon must be >= 0");
    if (!(step_size > 0.0)) throw DomainError("attack: step_size must be > 0");
    if (n_steps < 1) throw DomainError("attack: n_steps must be >= 1");
    if (!(temperature > 0.0)) throw DomainError("attack: temperature must be > 0");
  }
};

struct AdversarialExample {
  Vector x_clean;
  Vector x_adv;
  bool success = false;  // undefended classifier no longer predicts the label
  double l2_norm = 0.0;
  double linf_norm = 0.0;
};

enum class AdaptiveMode { kBpda, kBpdaEot };

inline const char* to_string(AdaptiveMode m) { return m == AdaptiveMode::kBpda ? "bpda" : "bpda+eot"; }

/// A stochastic defense x -> purify(x) drawing from the given stream.
using Purifier = std::function<Vector(const Vector&, NoiseStream&)>;

namespace detail {

inline Vector sign(const Vector& g) {
  return g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

/// Projection onto the l_inf ball around x, then onto the box [-1,1]^d.
inline Vector project(const Vector& candidate, const Vector& x, double eps) {
  return clamp_to_box(candidate.cwiseMax((x.array() - eps).matrix()).cwiseMin((x.array() + eps).matrix()));
}

inline void check_attack_input(const Vector& x, std::size_t label, std::size_t classes) {
  if (!in_box(x, 1e-12)) throw DomainError("attack: input must lie in [-1,1]^d");
  if (label >= classes) throw DomainError("attack: label out of range");
}

template <class Clf>
AdversarialExample finish(const Clf& clf, const Vector& x, Vector x_adv, std::size_t label) {
  AdversarialExample out;
  out.success = clf.predict(x_adv) != label;
  const Vector delta = x_adv - x;
  out.l2_norm = delta.norm();
  out.linf_norm = delta.size() ? delta.cwiseAbs().maxCoeff() : 0.0;
  out.x_clean = x;
  out.x_adv = std::move(x_adv);
  return out;
}

inline Vector start_point(const Vector& x, const AttackConfig& cfg, NoiseStream& noise) {
  if (!cfg.random_start || cfg.epsilon == 0.0) return x;
  return detail::project(x + noise.uniform_vector(x.size(), -cfg.epsilon, cfg.epsilon), x, cfg.epsilon);
}

}  // namespace detail

/// Sign-gradient ascent on the cross-entropy of the cosine logits with l_inf and box projection.
/// One step without random start and step_size >= epsilon is FGSM.
template <Encoder E>
AdversarialExample pgd(const CosineClassifier<E>& clf, const Vector& x, std::size_t label, const AttackConfig& cfg,
                       NoiseStream& noise) {
  cfg.validate();
  detail::check_attack_input(x, label, clf.classes());
  Vector x_adv = detail::start_point(x, cfg, noise);
  if (cfg.epsilon > 0.0) {
    for (int i = 0; i < cfg.n_steps; ++i) {
      const Vector g = clf.loss_gradient(x_adv, label, cfg.temperature);
      x_adv = detail::project(x_adv + cfg.step_size * detail::sign(g), x, cfg.epsilon);
    }
  }
  return detail::finish(clf, x, std::move(x_adv), label);
}

/// BPDA attack through a purifier: the backward pass treats purify as the identity, so the
/// gradient is the classifier gradient evaluated at purify(x_adv). In bpda+eot mode the
/// gradient is averaged over `eot_samples` independent purifications per step.
template <Encoder E>
AdversarialExample adaptive_attack(const CosineClassifier<E>& clf, const Purifier& purifier, const Vector& x,
                                   std::size_t label, const AttackConfig& cfg, AdaptiveMode mode, int eot_samples,
                                   NoiseStream& noise) {
  cfg.validate();
  detail::check_attack_input(x, label, clf.classes());
  if (eot_samples < 1) throw DomainError("adaptive_attack: eot_samples must be >= 1");
  const int samples = mode == AdaptiveMode::kBpda ? 1 : eot_samples;
  Vector x_adv = detail::start_point(x, cfg, noise);
  if (cfg.epsilon > 0.0) {
    for (int i = 0; i < cfg.n_steps; ++i) {
      Vector g = Vector::Zero(x.size());
      for (int s = 0; s < samples; ++s) {
        NoiseStream sub = noise.child(Purpose::kEot, static_cast<std::uint64_t>(i) * 1000003ull + s);
        const Vector purified = purifier(x_adv, sub);
        g += clf.loss_gradient(purified, label, cfg.temperature);
      }
      x_adv = detail::project(x_adv + cfg.step_size * detail::sign(g / samples), x, cfg.epsilon);
    }
  }
  return detail::finish(clf, x, std::move(x_adv), label);
}

}  // namespace diffcap
