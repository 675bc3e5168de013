#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffcap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (t outside [0,1], p outside (0,1), ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Cosine similarity requested for a zero-norm embedding.
class UndefinedSimilarityError : public Error {
 public:
  using Error::Error;
};

/// Reverse-time integration produced or consumed a non-finite value.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DomainError(msg);
}

}  // namespace detail
}  // namespace diffcap
