#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "diffcap/rng.hpp"
#include "diffcap/types.hpp"

namespace diffcap {

/// An embedding map phi: R^d -> R^m with a vector-Jacobian product for attacks.
template <class E>
concept Encoder = requires(const E& enc, const Vector& x, const Vector& g) {
  { enc.input_dim() } -> std::convertible_to<Eigen::Index>;
  { enc.output_dim() } -> std::convertible_to<Eigen::Index>;
  { enc.encode(x) } -> std::convertible_to<Vector>;
  { enc.pullback(x, g) } -> std::convertible_to<Vector>;  // J(x)^T g
};

/// phi(x) = A x.
class LinearEncoder {
 public:
  /// Seeded Gaussian rows, each normalized to unit length.
  LinearEncoder(Eigen::Index m, Eigen::Index d, std::uint64_t seed) : a_(m, d) {
    if (m < 2 || d < 1) throw DimensionError("LinearEncoder: need m >= 2 and d >= 1");
    NoiseStream rng(seed, 0, Purpose::kEncoder);
    for (Eigen::Index r = 0; r < m; ++r) {
      a_.row(r) = rng.normal_vector(d).transpose();
      a_.row(r) /= a_.row(r).norm();
    }
  }

  /// Uses the matrix as given (no normalization).
  static LinearEncoder from_matrix(Matrix a) { return LinearEncoder(std::move(a)); }

  Eigen::Index input_dim() const noexcept { return a_.cols(); }
  Eigen::Index output_dim() const noexcept { return a_.rows(); }
  const Matrix& matrix() const noexcept { return a_; }

  Vector encode(const Vector& x) const {
    if (x.size() != input_dim()) throw DimensionError("LinearEncoder: input dimension mismatch");
    return a_ * x;
  }

  Vector pullback(const Vector& /*x*/, const Vector& g) const { return a_.transpose() * g; }

 private:
  explicit LinearEncoder(Matrix a) : a_(std::move(a)) {
    if (a_.rows() < 2 || a_.cols() < 1) throw DimensionError("LinearEncoder: need m >= 2 and d >= 1");
    if (!a_.allFinite()) throw DomainError("LinearEncoder: non-finite entries");
  }

  Matrix a_;
};

/// phi(x) = W2 tanh(W1 x + b1). Not scale invariant; used to stress the assumptions.
class MlpEncoder {
 public:
  MlpEncoder(Eigen::Index m, Eigen::Index d, Eigen::Index hidden, std::uint64_t seed)
      : w1_(hidden, d), b1_(hidden), w2_(m, hidden) {
    if (m < 2 || d < 1 || hidden < 1) throw DimensionError("MlpEncoder: need m >= 2, d >= 1, hidden >= 1");
    NoiseStream rng(seed, 1, Purpose::kEncoder);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (Eigen::Index r = 0; r < hidden; ++r) w1_.row(r) = s1 * rng.normal_vector(d).transpose();
    b1_ = 0.1 * rng.normal_vector(hidden);
    for (Eigen::Index r = 0; r < m; ++r) w2_.row(r) = s2 * rng.normal_vector(hidden).transpose();
  }

  MlpEncoder(Matrix w1, Vector b1, Matrix w2) : w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)) {
    if (b1_.size() != w1_.rows() || w2_.cols() != w1_.rows() || w2_.rows() < 2)
      throw DimensionError("MlpEncoder: inconsistent layer shapes");
  }

  Eigen::Index input_dim() const noexcept { return w1_.cols(); }
  Eigen::Index output_dim() const noexcept { return w2_.rows(); }
  Eigen::Index hidden_dim() const noexcept { return w1_.rows(); }
  const Matrix& w1() const noexcept { return w1_; }
  const Vector& b1() const noexcept { return b1_; }
  const Matrix& w2() const noexcept { return w2_; }

  Vector encode(const Vector& x) const {
    if (x.size() != input_dim()) throw DimensionError("MlpEncoder: input dimension mismatch");
    return w2_ * (w1_ * x + b1_).array().tanh().matrix();
  }

  Vector pullback(const Vector& x, const Vector& g) const {
    const Vector h = (w1_ * x + b1_).array().tanh().matrix();
    const Vector back = (w2_.transpose() * g).array() * (1.0 - h.array().square());
    return w1_.transpose() * back;
  }

 private:
  Matrix w1_;
  Vector b1_;
  Matrix w2_;
};

static_assert(Encoder<LinearEncoder>);
static_assert(Encoder<MlpEncoder>);

/// Runtime-selected encoder (config `encoder.kind`).
class AnyEncoder {
 public:
  AnyEncoder(LinearEncoder e) : impl_(std::move(e)) {}  // NOLINT(google-explicit-constructor)
  AnyEncoder(MlpEncoder e) : impl_(std::move(e)) {}     // NOLINT(google-explicit-constructor)

  Eigen::Index input_dim() const {
    return std::visit([](const auto& e) { return e.input_dim(); }, impl_);
  }
  Eigen::Index output_dim() const {
    return std::visit([](const auto& e) { return e.output_dim(); }, impl_);
  }
  Vector encode(const Vector& x) const {
    return std::visit([&](const auto& e) { return e.encode(x); }, impl_);
  }
  Vector pullback(const Vector& x, const Vector& g) const {
    return std::visit([&](const auto& e) { return e.pullback(x, g); }, impl_);
  }

  const LinearEncoder* linear() const noexcept { return std::get_if<LinearEncoder>(&impl_); }
  const MlpEncoder* mlp() const noexcept { return std::get_if<MlpEncoder>(&impl_); }

 private:
  std::variant<LinearEncoder, MlpEncoder> impl_;
};

static_assert(Encoder<AnyEncoder>);

/// Cosine similarity, clamped to [-1,1].
inline double cosine(const Vector& u, const Vector& v) {
  check_same_dim(u, v, "cosine");
  const double nu = u.norm();
  const double nv = v.norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw UndefinedSimilarityError("cosine: zero-norm embedding");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

/// K unit-norm class prototypes in embedding space.
class PrototypeSet {
 public:
  explicit PrototypeSet(std::vector<Vector> prototypes) : protos_(std::move(prototypes)) {
    if (protos_.size() < 2) throw DomainError("PrototypeSet: need K >= 2 prototypes");
    for (auto& p : protos_) {
      if (p.size() != protos_.front().size()) throw DimensionError("PrototypeSet: dimension mismatch");
      const double n = p.norm();
      if (!(n > 0.0) || !std::isfinite(n)) throw UndefinedSimilarityError("PrototypeSet: zero prototype");
      p /= n;
    }
  }

  /// Prototypes from the embeddings of per-class mean points.
  template <Encoder E>
  static PrototypeSet from_class_means(const E& enc, const std::vector<Vector>& class_means) {
    std::vector<Vector> p;
    p.reserve(class_means.size());
    for (const auto& mu : class_means) p.push_back(enc.encode(mu));
    return PrototypeSet(std::move(p));
  }

  std::size_t size() const noexcept { return protos_.size(); }
  Eigen::Index dim() const noexcept { return protos_.front().size(); }
  const Vector& operator[](std::size_t k) const { return protos_.at(k); }
  const std::vector<Vector>& all() const noexcept { return protos_; }

 private:
  std::vector<Vector> protos_;
};

struct Classification {
  Vector logits;  // cosine similarity to each prototype
  std::size_t label;
};

/// Lowest index among maximal entries.
inline std::size_t argmax_lowest(const Vector& v) {
  std::size_t best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k)
    if (v[k] > v[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(k);
  return best;
}

/// Zero-shot classifier h(x) = argmax_k cos(phi(x), psi_k).
template <Encoder E>
class CosineClassifier {
 public:
  CosineClassifier(E encoder, PrototypeSet prototypes)
      : enc_(std::move(encoder)), protos_(std::move(prototypes)) {
    if (enc_.output_dim() != protos_.dim())
      throw DimensionError("CosineClassifier: encoder output dimension != prototype dimension");
  }

  const E& encoder() const noexcept { return enc_; }
  const PrototypeSet& prototypes() const noexcept { return protos_; }
  std::size_t classes() const noexcept { return protos_.size(); }
  Eigen::Index input_dim() const { return enc_.input_dim(); }

  Vector logits_of_embedding(const Vector& e) const {
    const double n = e.norm();
    if (!(n > 0.0)) throw UndefinedSimilarityError("classifier: phi(x) = 0");
    Vector out(static_cast<Eigen::Index>(classes()));
    for (std::size_t k = 0; k < classes(); ++k)
      out[static_cast<Eigen::Index>(k)] = std::clamp(protos_[k].dot(e) / n, -1.0, 1.0);
    return out;
  }

  Classification classify(const Vector& x) const {
    Vector l = logits_of_embedding(enc_.encode(x));
    const std::size_t k = argmax_lowest(l);
    return {std::move(l), k};
  }

  std::size_t predict(const Vector& x) const { return classify(x).label; }

  /// Cross-entropy of softmax(logits / temperature) against `label`.
  double loss(const Vector& x, std::size_t label, double temperature) const {
    check_loss_args(label, temperature);
    const Vector z = logits_of_embedding(enc_.encode(x)) / temperature;
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum()) - z[static_cast<Eigen::Index>(label)];
  }

  /// Exact gradient of loss() with respect to x.
  Vector loss_gradient(const Vector& x, std::size_t label, double temperature) const {
    check_loss_args(label, temperature);
    const Vector e = enc_.encode(x);
    const double n = e.norm();
    if (!(n > 0.0)) throw UndefinedSimilarityError("loss_gradient: phi(x) = 0");
    const Vector u = e / n;
    const auto K = static_cast<Eigen::Index>(classes());
    Vector c(K);
    for (Eigen::Index k = 0; k < K; ++k) c[k] = protos_[static_cast<std::size_t>(k)].dot(u);
    const Vector z = c / temperature;
    Vector p = (z.array() - z.maxCoeff()).exp().matrix();
    p /= p.sum();
    p[static_cast<Eigen::Index>(label)] -= 1.0;
    const Vector dc = p / temperature;  // dL/dc
    Vector du = Vector::Zero(e.size());
    for (Eigen::Index k = 0; k < K; ++k) du += dc[k] * protos_[static_cast<std::size_t>(k)];
    const Vector de = (du - u * u.dot(du)) / n;  // through e / ||e||
    return enc_.pullback(x, de);
  }

 private:
  void check_loss_args(std::size_t label, double temperature) const {
    if (label >= classes()) throw DomainError("label out of range");
    if (!(temperature > 0.0)) throw DomainError("temperature must be > 0");
  }

  E enc_;
  PrototypeSet protos_;
};

}  // namespace diffcap
