#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "rbergomi/numerics/linalg.hpp"
#include "rbergomi/numerics/rng.hpp"
#include "rbergomi/numerics/time_grid.hpp"

namespace rbergomi::sim {

/// Cov(I(s), I(t)) = 2H int_0^{min(s,t)} (s-u)^{H-1/2} (t-u)^{H-1/2} du for
/// I(t) = sqrt(2H) int_0^t (t-u)^{H-1/2} dW_u.
inline double volterra_covariance(double H, double s, double t) {
  if (s > t) std::swap(s, t);
  if (s <= 0.0) return 0.0;
  if (s == t) return std::pow(t, 2.0 * H);
  // Substitute v = s - u so the integrable singularity sits at v = 0.
  const double gap = t - s;
  boost::math::quadrature::tanh_sinh<double> q;
  const double integral =
      q.integrate([&](double v) { return std::pow(v, H - 0.5) * std::pow(gap + v, H - 0.5); }, 0.0, s);
  return 2.0 * H * integral;
}

/// Cov(I(t), W(s)) = sqrt(2H) int_0^{min(s,t)} (t-u)^{H-1/2} du.
inline double volterra_brownian_covariance(double H, double t, double s) {
  const double m = std::min(s, t);
  const double a = H + 0.5;
  return std::sqrt(2.0 * H) * (std::pow(t, a) - std::pow(t - m, a)) / a;
}

struct ExactSamples {
  Matrix I;   // paths x (n+1), I(t_0) = 0
  Matrix dW;  // paths x n
};

/// Joint covariance of (I(t_1..t_n), W(t_1..t_n)).
inline Matrix exact_joint_covariance(double H, const numerics::TimeGrid& grid) {
  const int n = grid.steps();
  Matrix c(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) {
    const double ti = grid.time(i + 1);
    for (int j = 0; j <= i; ++j) {
      const double tj = grid.time(j + 1);
      c(i, j) = c(j, i) = volterra_covariance(H, ti, tj);
      c(n + i, n + j) = c(n + j, n + i) = std::min(ti, tj);
    }
    for (int j = 0; j < n; ++j) c(i, n + j) = c(n + j, i) = volterra_brownian_covariance(H, ti, grid.time(j + 1));
  }
  return c;
}

/// Exact-in-law samples of I on the grid jointly with the Brownian
/// increments, by one Cholesky factorization of the joint covariance.
inline ExactSamples exact_volterra_reference(double H, const numerics::TimeGrid& grid, int paths,
                                             std::uint64_t seed) {
  const int n = grid.steps();
  if (n > 128) throw std::invalid_argument("exact_volterra_reference: at most 128 steps");
  const Matrix l = numerics::cholesky(exact_joint_covariance(H, grid));
  Matrix z(paths, 2 * n);
  for (int b = 0; b < paths; ++b)
    numerics::RngStream{seed, static_cast<std::uint32_t>(b), 0, numerics::StreamDomain::Reference}.fill_normals(
        z.row(b).data(), static_cast<std::size_t>(2 * n));
  const Matrix x = z * l.transpose();
  ExactSamples out{Matrix::Zero(paths, n + 1), Matrix(paths, n)};
  out.I.rightCols(n) = x.leftCols(n);
  for (int i = 0; i < n; ++i) out.dW.col(i) = x.col(n + i) - (i > 0 ? Matrix(x.col(n + i - 1)) : Matrix::Zero(paths, 1));
  return out;
}

}  // namespace rbergomi::sim
