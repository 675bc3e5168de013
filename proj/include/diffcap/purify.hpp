#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "diffcap/embed.hpp"
#include "diffcap/rng.hpp"
#include "diffcap/schedule.hpp"
#include "diffcap/sde.hpp"
#include "diffcap/types.hpp"

namespace diffcap {

/// How each forward noise level is produced from the previous one.
///   kShared:   x_k = sqrt(alpha_k) x0 + sqrt(1 - alpha_k) eps, one eps per input (closed-form path)
///   kMarkov:   x_k = transition kernel applied to x_{k-1} (one SDE trajectory)
///   kResample: x_k = closed form with a fresh eps at every level (diagnostic only)
enum class InjectionMode { kShared, kMarkov, kResample };

inline const char* to_string(InjectionMode m) {
  switch (m) {
    case InjectionMode::kShared: return "shared";
    case InjectionMode::kMarkov: return "markov";
    case InjectionMode::kResample: return "resample";
  }
  return "?";
}

inline InjectionMode parse_injection_mode(const std::string& s) {
  if (s == "shared") return InjectionMode::kShared;
  if (s == "markov") return InjectionMode::kMarkov;
  if (s == "resample") return InjectionMode::kResample;
  throw DomainError("unknown injection mode '" + s + "' (expected shared|markov|resample)");
}

inline ReverseMode parse_reverse_mode(const std::string& s) {
  if (s == "stochastic") return ReverseMode::kStochastic;
  if (s == "probability-flow" || s == "pf") return ReverseMode::kProbabilityFlow;
  throw DomainError("unknown reverse mode '" + s + "' (expected stochastic|probability-flow)");
}

/// Walks the forward noise levels 1/T, 2/T, ..., 1 of one input.
class InjectionPath {
 public:
  InjectionPath(Vector x0, const LinearSchedule& s, int T, InjectionMode mode, NoiseStream noise)
      : x0_(std::move(x0)), state_(x0_), s_(s), T_(T), mode_(mode), noise_(std::move(noise)) {
    if (T < 1) throw DomainError("InjectionPath: T must be >= 1");
    if (mode_ == InjectionMode::kShared) eps_ = noise_.normal_vector(x0_.size());
  }

  int step() const noexcept { return k_; }
  double time() const noexcept { return static_cast<double>(k_) / T_; }
  const Vector& state() const noexcept { return state_; }
  bool done() const noexcept { return k_ >= T_; }

  const Vector& advance() {
    if (done()) throw DomainError("InjectionPath: already at t = 1");
    ++k_;
    const double t1 = time();
    switch (mode_) {
      case InjectionMode::kShared:
        state_ = forward_with_noise(x0_, eps_, t1, s_);
        break;
      case InjectionMode::kMarkov:
        state_ = transition_step(state_, static_cast<double>(k_ - 1) / T_, 1.0 / T_, s_, noise_);
        break;
      case InjectionMode::kResample:
        state_ = forward_sample(x0_, t1, s_, noise_);
        break;
    }
    return state_;
  }

 private:
  Vector x0_;
  Vector state_;
  Vector eps_;
  LinearSchedule s_;
  int T_;
  InjectionMode mode_;
  NoiseStream noise_;
  int k_ = 0;
};

struct ReverseConfig {
  int steps = 100;
  ReverseMode mode = ReverseMode::kStochastic;
};

struct PurifyConfig {
  double tau = 0.96;  // similarity threshold
  int T = 100;        // levels to reach t = 1 (step 1/T)
  double min_t = 0.0; // the stop must happen strictly after this depth
  InjectionMode injection = InjectionMode::kShared;
  ReverseConfig reverse;

  void validate() const {
    if (!(tau > -1.0 - 1e-12) || !std::isfinite(tau)) throw DomainError("purify: tau must be finite and >= -1");
    if (T < 1) throw DomainError("purify: T must be >= 1");
    if (!(min_t >= 0.0 && min_t < 1.0)) throw DomainError("purify: min_t must lie in [0,1)");
    if (reverse.steps < 1) throw DomainError("purify: reverse steps must be >= 1");
  }

  /// First step index allowed to stop: the smallest k with k/T > min_t.
  int first_allowed_step() const { return static_cast<int>(std::floor(min_t * T + 1e-9)) + 1; }
};

struct PurificationResult {
  Vector x_clean;
  Vector x_stable;  // noised state handed to the denoiser
  double t_stop = 0.0;
  int steps_used = 0;
  std::vector<double> similarity_trace;  // cos(e_k, e_{k-1}) for k = 1..steps_used
};

struct StabilizeResult {
  Vector x_stable;
  double t_stop;
  int steps_used;
  std::vector<double> similarity_trace;
};

/// The noise-injection loop alone: advance one level at a time until the cosine between
/// consecutive embeddings reaches tau (after min_t), or t = 1.
template <Encoder E>
StabilizeResult stabilize(const Vector& x_adv, const E& encoder, const LinearSchedule& s, const PurifyConfig& cfg,
                          NoiseStream& noise) {
  cfg.validate();
  if (!in_box(x_adv, 1e-9)) throw DomainError("purify: input must lie in [-1,1]^d");
  InjectionPath path(x_adv, s, cfg.T, cfg.injection, noise.child(Purpose::kInject));
  Vector e_prev = encoder.encode(x_adv);
  StabilizeResult out{x_adv, 0.0, 0, {}};
  out.similarity_trace.reserve(static_cast<std::size_t>(cfg.T));
  const int first = cfg.first_allowed_step();
  while (!path.done()) {
    Vector e_curr = encoder.encode(path.advance());
    double c;
    try {
      c = cosine(e_curr, e_prev);
    } catch (const UndefinedSimilarityError&) {
      throw UndefinedSimilarityError("purify: zero embedding at step " + std::to_string(path.step()));
    }
    out.similarity_trace.push_back(c);
    if (c >= cfg.tau && path.step() >= first) break;
    e_prev = std::move(e_curr);
  }
  out.x_stable = path.state();
  out.steps_used = path.step();
  out.t_stop = path.time();
  return out;
}

/// Cumulative noise injection until the embedding stabilizes, then reverse-time denoising
/// from the stabilized state at its own time t_stop.
template <Encoder E>
PurificationResult diffcap_purify(const Vector& x_adv, const E& encoder, const LinearSchedule& s, const ScoreFn& score,
                                  const PurifyConfig& cfg, NoiseStream& noise) {
  auto st = stabilize(x_adv, encoder, s, cfg, noise);
  NoiseStream rev = noise.child(Purpose::kReverse);
  PurificationResult out;
  out.x_clean = reverse_integrate(st.x_stable, st.t_stop, s, score, cfg.reverse.steps, cfg.reverse.mode, rev);
  out.x_stable = std::move(st.x_stable);
  out.t_stop = st.t_stop;
  out.steps_used = st.steps_used;
  out.similarity_trace = std::move(st.similarity_trace);
  return out;
}

/// Fixed-depth baseline: one forward draw to t_fixed, then reverse integration. steps_used
/// is 0 and the trace is empty.
inline PurificationResult fixed_t_purify(const Vector& x_adv, const LinearSchedule& s, const ScoreFn& score,
                                         double t_fixed, const ReverseConfig& rc, NoiseStream& noise) {
  if (!(t_fixed > 0.0 && t_fixed <= 1.0)) throw DomainError("fixed_t_purify: t_fixed must lie in (0,1]");
  NoiseStream fwd = noise.child(Purpose::kInject);
  NoiseStream rev = noise.child(Purpose::kReverse);
  PurificationResult out;
  out.x_stable = forward_sample(x_adv, t_fixed, s, fwd);
  out.t_stop = t_fixed;
  out.x_clean = reverse_integrate(out.x_stable, t_fixed, s, score, rc.steps, rc.mode, rev);
  return out;
}

}  // namespace diffcap
