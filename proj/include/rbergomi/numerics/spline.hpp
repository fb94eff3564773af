#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "rbergomi/errors.hpp"

namespace rbergomi::numerics {

/// Natural cubic spline with constant extrapolation outside the knot range.
class Spline1D {
 public:
  Spline1D() = default;

  Spline1D(std::span<const double> knots, std::span<const double> values)
      : x_(knots.begin(), knots.end()), y_(values.begin(), values.end()) {
    if (x_.size() != y_.size()) throw std::invalid_argument("Spline1D: size mismatch");
    if (x_.size() < 2) throw std::invalid_argument("Spline1D: need at least 2 knots");
    for (std::size_t i = 1; i < x_.size(); ++i) {
      if (x_[i] == x_[i - 1]) throw DuplicateKnots("Spline1D: duplicate knot");
      if (x_[i] < x_[i - 1]) throw std::invalid_argument("Spline1D: knots must be increasing");
    }
    solve_second_derivatives();
  }

  double operator()(double t) const {
    if (t <= x_.front()) return y_.front();
    if (t >= x_.back()) return y_.back();
    const std::size_t i = segment(t);
    if (t == x_[i]) return y_[i];
    const double h = x_[i + 1] - x_[i];
    const double a = (x_[i + 1] - t) / h;
    const double b = (t - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] +
           ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
  }

  /// Exact integral of the extrapolated spline over [lo, hi].
  double integrate(double lo, double hi) const {
    if (hi < lo) return -integrate(hi, lo);
    double total = 0.0;
    if (lo < x_.front()) {
      total += y_.front() * (std::min(hi, x_.front()) - lo);
      lo = x_.front();
    }
    if (hi > x_.back()) {
      total += y_.back() * (hi - std::max(lo, x_.back()));
      hi = x_.back();
    }
    if (hi <= lo) return total;
    for (std::size_t i = segment(lo); i + 1 < x_.size() && x_[i] < hi; ++i) {
      const double a = std::max(lo, x_[i]);
      const double b = std::min(hi, x_[i + 1]);
      total += antiderivative(i, b) - antiderivative(i, a);
    }
    return total;
  }

  bool inside(double t) const { return t >= x_.front() && t <= x_.back(); }
  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }

 private:
  std::size_t segment(double t) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), t);
    std::size_t i = static_cast<std::size_t>(it - x_.begin());
    i = i == 0 ? 0 : i - 1;
    return std::min(i, x_.size() - 2);
  }

  // Integral from x_i to t of the cubic on segment i.
  double antiderivative(std::size_t i, double t) const {
    const double h = x_[i + 1] - x_[i];
    const double b = (t - x_[i]) / h;
    const double a = 1.0 - b;
    // Integrate in b from 0 with dt = h db, where a = 1 - b.
    const double int_a = b - b * b / 2.0;
    const double int_b = b * b / 2.0;
    const double int_a3 = (1.0 - a * a * a * a) / 4.0;
    const double int_b3 = b * b * b * b / 4.0;
    return h * (y_[i] * int_a + y_[i + 1] * int_b +
                (m_[i] * (int_a3 - int_a) + m_[i + 1] * (int_b3 - int_b)) * h * h / 6.0);
  }

  void solve_second_derivatives() {
    const std::size_t n = x_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    // Tridiagonal system for interior second derivatives, natural ends.
    std::vector<double> c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x_[i] - x_[i - 1];
      const double h1 = x_[i + 1] - x_[i];
      const double diag = 2.0 * (h0 + h1);
      const double rhs = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
      const double denom = diag - h0 * c[i - 1];
      c[i] = h1 / denom;
      d[i] = (rhs - h0 * d[i - 1]) / denom;
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = d[i] - c[i] * m_[i + 1];
      if (i == 1) break;
    }
  }

  std::vector<double> x_, y_, m_;
};

}  // namespace rbergomi::numerics
