#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace rbergomi::ad {

using ScalarFunction = std::function<double(const std::vector<double>&)>;

/// Central differences (f(x + eps e_k) - f(x - eps e_k)) / (2 eps).
inline std::vector<double> central_difference(const ScalarFunction& f, const std::vector<double>& point,
                                              double eps) {
  std::vector<double> out(point.size());
  std::vector<double> x = point;
  for (std::size_t k = 0; k < point.size(); ++k) {
    x[k] = point[k] + eps;
    const double up = f(x);
    x[k] = point[k] - eps;
    const double down = f(x);
    x[k] = point[k];
    out[k] = (up - down) / (2.0 * eps);
  }
  return out;
}

/// Max over coordinates of |fd_k - grad_k| / (|grad_k| + 1e-12).
inline double finite_diff_check(const ScalarFunction& f, const std::vector<double>& point,
                                const std::vector<double>& grad, double eps) {
  if (grad.size() != point.size()) throw std::invalid_argument("finite_diff_check: size mismatch");
  const auto fd = central_difference(f, point, eps);
  double worst = 0.0;
  for (std::size_t k = 0; k < point.size(); ++k)
    worst = std::max(worst, std::abs(fd[k] - grad[k]) / (std::abs(grad[k]) + 1e-12));
  return worst;
}

}  // namespace rbergomi::ad
