#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "rbergomi/errors.hpp"

namespace rbergomi {

/// Dense row-major matrix used across the library. Per-path quantities are
/// stored as columns ([paths x 1]) so that path index is the row index.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace rbergomi

namespace rbergomi::numerics {

struct CholeskyFactor {
  Matrix lower;
  double jitter = 0.0;  // diagonal shift that was applied, 0 if none
};

namespace detail {

// Plain column Cholesky. Returns false on the first pivot that is not
// strictly positive.
inline bool cholesky_in_place(const Matrix& a, double shift, Matrix& l) {
  const Eigen::Index n = a.rows();
  l.setZero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = a(j, j) + shift;
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return false;
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / d;
    }
  }
  return true;
}

}  // namespace detail

/// Cholesky factor of a symmetric positive semi-definite matrix. When the
/// plain factorization breaks down, a single diagonal jitter of
/// 1e-12 * trace / dim is added; a second breakdown throws NotPSD.
inline CholeskyFactor cholesky_with_info(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols()) throw ShapeError("cholesky: matrix must be square");
  CholeskyFactor out;
  if (detail::cholesky_in_place(sigma, 0.0, out.lower)) return out;
  const double jitter = 1e-12 * sigma.trace() / static_cast<double>(sigma.rows());
  if (jitter > 0.0 && detail::cholesky_in_place(sigma, jitter, out.lower)) {
    out.jitter = jitter;
    return out;
  }
  throw NotPSD("cholesky: matrix is not positive semi-definite (dim " +
               std::to_string(sigma.rows()) + ")");
}

inline Matrix cholesky(const Matrix& sigma) { return cholesky_with_info(sigma).lower; }

}  // namespace rbergomi::numerics
