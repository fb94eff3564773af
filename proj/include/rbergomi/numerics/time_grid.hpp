#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rbergomi::numerics {

/// Equidistant grid 0 = t_0 < ... < t_n = T.
class TimeGrid {
 public:
  TimeGrid(int steps, double horizon) : n_(steps), horizon_(horizon) {
    if (steps <= 0) throw std::invalid_argument("TimeGrid: steps must be positive");
    if (!(horizon > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
  }

  int steps() const { return n_; }
  double horizon() const { return horizon_; }
  double step() const { return horizon_ / n_; }
  double time(int i) const { return i == n_ ? horizon_ : i * step(); }

  /// Index k with t_k == t, or -1 if t is not a grid node (relative tolerance 1e-9).
  int index_of(double t) const {
    const double k = t / step();
    const double r = std::round(k);
    if (r < 0 || r > n_ || std::abs(k - r) > 1e-9 * std::max(1.0, k)) return -1;
    return static_cast<int>(r);
  }

 private:
  int n_;
  double horizon_;
};

}  // namespace rbergomi::numerics
