#pragma once

#include <cstdint>
#include <random>

#include "diffcap/types.hpp"

namespace diffcap {

/// Purpose tags separate the substreams a single work unit draws from.
enum class Purpose : std::uint64_t {
  kData = 1,
  kAttack = 2,
  kInject = 3,
  kReverse = 4,
  kCalibrate = 5,
  kCertify = 6,
  kTheory = 7,
  kEot = 8,
  kPermutation = 9,
  kEncoder = 10,
  kFixedBaseline = 11,
};

/// splitmix64 finalizer (Steele, Lea & Flood); used as the key-mixing function.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Seedable, splittable Gaussian source.
///
/// A stream is identified by (master seed, unit index, purpose tag, sub index). The engine
/// seed is
///
///     splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ unit) ^ purpose) ^ sub)
///
/// so two streams with the same identity replay the same draws and streams with different
/// identities are statistically independent. Work units that own disjoint ids can run in
/// any order, or in parallel, without changing results.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t unit, Purpose purpose, std::uint64_t sub = 0)
      : seed_(seed), unit_(unit), purpose_(purpose), sub_(sub), engine_(mix(seed, unit, purpose, sub)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t unit() const noexcept { return unit_; }
  Purpose purpose() const noexcept { return purpose_; }
  std::uint64_t sub() const noexcept { return sub_; }

  /// Fresh stream for a nested purpose; does not consume draws from this one.
  NoiseStream child(Purpose purpose, std::uint64_t sub = 0) const {
    return NoiseStream(mix(seed_, unit_, purpose_, sub_), unit_, purpose, sub);
  }

  double normal() { return gauss_(engine_); }
  double uniform() { return unif_(engine_); }
  std::uint64_t bits() { return engine_(); }

  Vector normal_vector(Eigen::Index d) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = gauss_(engine_);
    return v;
  }

  Vector uniform_vector(Eigen::Index d, double lo, double hi) {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = lo + (hi - lo) * unif_(engine_);
    return v;
  }

  std::mt19937_64& engine() noexcept { return engine_; }

  static constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t unit, Purpose purpose,
                                     std::uint64_t sub) noexcept {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ unit);
    h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
    return splitmix64(h ^ sub);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t unit_;
  Purpose purpose_;
  std::uint64_t sub_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace diffcap
