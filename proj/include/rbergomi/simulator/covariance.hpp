#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "rbergomi/autodiff/ops.hpp"
#include "rbergomi/numerics/linalg.hpp"
#include "rbergomi/numerics/special.hpp"

namespace rbergomi::sim {

/// int_0^h e^{-x u} du, equal to h at x = 0.
inline double exp_integral(double x, double h) { return x == 0.0 ? h : -std::expm1(-x * h) / x; }

/// Cross-covariances of the local fractional increment
///   I_N = sqrt(2H) int_{t_{i-1}}^{t_i} (t_i - s)^{H-1/2} dW_s
/// with dW (first entry) and with each J^j = int e^{-lambda_j (t_i - s)} dW_s,
/// together with their H-derivatives.
struct LocalCovariance {
  Matrix value;       // 1 x (1 + nodes)
  Matrix derivative;  // d/dH, same shape
  double variance;    // h^{2H}
  double d_variance;  // d/dH of h^{2H}
};

inline LocalCovariance local_covariance(const std::vector<double>& nodes, double h, double H) {
  const double a = H + 0.5;
  const double root = std::sqrt(2.0 * H);
  const double d_root = 1.0 / root;  // d sqrt(2H) / dH
  const double ha = std::pow(h, a);
  const std::size_t n = nodes.size();
  LocalCovariance out{Matrix(1, n + 1), Matrix(1, n + 1), std::pow(h, 2.0 * H), 0.0};
  out.d_variance = 2.0 * std::log(h) * out.variance;
  // sqrt(2H) h^a g(a, lambda h) with g(a, x) = x^{-a} gamma(a, x); g(a, 0) = 1/a covers the dW entry.
  auto entry = [&](double lambda, Eigen::Index col) {
    const auto g = numerics::scaled_lower_gamma(a, lambda * h);
    out.value(0, col) = root * ha * g.value;
    out.derivative(0, col) = d_root * ha * g.value + root * ha * std::log(h) * g.value + root * ha * g.d_da;
  };
  entry(0.0, 0);
  for (std::size_t j = 0; j < n; ++j) entry(nodes[j], static_cast<Eigen::Index>(j + 1));
  return out;
}

/// Covariance of (dW, J^1..J^N), which does not depend on H.
inline Matrix increment_covariance(const std::vector<double>& nodes, double h) {
  const Eigen::Index n = static_cast<Eigen::Index>(nodes.size());
  Matrix a(n + 1, n + 1);
  a(0, 0) = h;
  for (Eigen::Index k = 0; k < n; ++k) {
    a(0, k + 1) = a(k + 1, 0) = exp_integral(nodes[k], h);
    for (Eigen::Index l = 0; l < n; ++l) a(k + 1, l + 1) = exp_integral(nodes[k] + nodes[l], h);
  }
  return a;
}

/// Full covariance of Theta_i = (dW, J^1..J^N, I_N), size N + 2.
inline Matrix covariance_matrix(const std::vector<double>& nodes, double h, double H) {
  const Eigen::Index n = static_cast<Eigen::Index>(nodes.size());
  Matrix s(n + 2, n + 2);
  s.topLeftCorner(n + 1, n + 1) = increment_covariance(nodes, h);
  const auto c = local_covariance(nodes, h, H);
  s.block(n + 1, 0, 1, n + 1) = c.value;
  s.block(0, n + 1, n + 1, 1) = c.value.transpose();
  s(n + 1, n + 1) = c.variance;
  return s;
}

/// The 2x2 covariance of (dW, I_N) used on the last step.
inline Matrix final_covariance(double h, double H) { return covariance_matrix({}, h, H); }

/// d Sigma / dH for covariance_matrix.
inline Matrix covariance_derivative(const std::vector<double>& nodes, double h, double H) {
  const Eigen::Index n = static_cast<Eigen::Index>(nodes.size());
  Matrix d = Matrix::Zero(n + 2, n + 2);
  const auto c = local_covariance(nodes, h, H);
  d.block(n + 1, 0, 1, n + 1) = c.derivative;
  d.block(0, n + 1, n + 1, 1) = c.derivative.transpose();
  d(n + 1, n + 1) = c.d_variance;
  return d;
}

/// Covariance matrix recorded as a function of a tracked H.
inline ad::Var covariance_var(const std::vector<double>& nodes, double h, const ad::Var& H) {
  const double hv = H.scalar();
  return ad::scalar_function(H, covariance_matrix(nodes, h, hv), covariance_derivative(nodes, h, hv));
}

/// Square-root factor for sampling Theta_i.
///
/// The (dW, J) block is H-independent and numerically rank deficient (slow
/// nodes nearly duplicate dW), so it is factored once by a truncated
/// eigendecomposition: block = R R^T with R = U_r diag(sqrt(mu_r)), keeping
/// mu > rel_cutoff * mu_max. The I_N row is its projection onto the kept
/// directions, P c(H) with P = diag(mu_r^{-1/2}) U_r^T, plus an independent
/// remainder with variance h^{2H} - |P c(H)|^2.
struct StepFactor {
  Matrix increments;   // R, (N+1) x r
  Matrix projection;   // P, r x (N+1)
  int rank = 0;

  static StepFactor build(const std::vector<double>& nodes, double h, double rel_cutoff = 1e-12) {
    const Matrix a = increment_covariance(nodes, h);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd mu = es.eigenvalues();
    const Eigen::MatrixXd u = es.eigenvectors();
    const double top = mu.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = mu.size() - 1; k >= 0; --k)
      if (mu(k) > rel_cutoff * top) keep.push_back(k);
    StepFactor f;
    f.rank = static_cast<int>(keep.size());
    f.increments.resize(a.rows(), f.rank);
    f.projection.resize(f.rank, a.rows());
    for (int r = 0; r < f.rank; ++r) {
      const double s = std::sqrt(mu(keep[r]));
      f.increments.col(r) = u.col(keep[r]) * s;
      f.projection.row(r) = u.col(keep[r]).transpose() / s;
    }
    return f;
  }
};

}  // namespace rbergomi::sim
