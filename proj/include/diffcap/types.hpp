#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "diffcap/error.hpp"

namespace diffcap {

/// A point in data space (x, x_adv, x(t)) or an embedding.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void check_same_dim(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": dimension " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
}

/// Inputs enter the pipeline inside the box [-1,1]^d, so that ||x||^2 <= d.
inline Vector clamp_to_box(const Vector& x) { return x.cwiseMax(-1.0).cwiseMin(1.0); }

inline bool in_box(const Vector& x, double tol = 0.0) {
  return x.allFinite() && (x.size() == 0 || x.cwiseAbs().maxCoeff() <= 1.0 + tol);
}

}  // namespace diffcap
