#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rbergomi/autodiff/ops.hpp"

namespace rbergomi::sim {

/// A model parameter as a function of time: either a constant or a
/// piecewise-linear curve through (t, value) points, flat outside.
struct ParamCurve {
  double constant = 0.0;
  std::vector<std::pair<double, double>> points;

  ParamCurve() = default;
  ParamCurve(double c) : constant(c) {}  // NOLINT(google-explicit-constructor)
  static ParamCurve curve(std::vector<std::pair<double, double>> pts) {
    if (pts.size() < 2) throw std::invalid_argument("ParamCurve: need at least 2 points");
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (!(pts[i].first > pts[i - 1].first)) throw std::invalid_argument("ParamCurve: times must increase");
    ParamCurve c;
    c.points = std::move(pts);
    c.constant = c.points.front().second;
    return c;
  }

  bool is_constant() const { return points.empty(); }

  double operator()(double t) const {
    if (points.empty()) return constant;
    if (t <= points.front().first) return points.front().second;
    if (t >= points.back().first) return points.back().second;
    auto it = std::upper_bound(points.begin(), points.end(), t,
                               [](double v, const std::pair<double, double>& p) { return v < p.first; });
    const auto& [t1, v1] = *it;
    const auto& [t0, v0] = *(it - 1);
    if (t == t0) return v0;
    return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
  }
};

/// theta = (xi0(t), H(t), rho(t), eta(t)); v0 defaults to xi0(0).
struct ModelParams {
  ParamCurve xi0{0.09};
  ParamCurve H{0.07};
  ParamCurve rho{-0.9};
  ParamCurve eta{1.9};
  std::optional<double> v0;

  double spot_variance() const { return v0 ? *v0 : xi0(0.0); }
};

/// eta = 2 kappa sqrt(Gamma(3/2 - H) / (Gamma(H + 1/2) Gamma(2 - 2H))).
inline double eta_from_kappa(double kappa, double H) {
  if (!(H > 0.0 && H <= 0.5)) throw std::domain_error("eta_from_kappa: H must be in (0, 1/2]");
  if (!(kappa >= 0.0)) throw std::domain_error("eta_from_kappa: kappa must be >= 0");
  const double ratio = std::exp(std::lgamma(1.5 - H) - std::lgamma(H + 0.5) - std::lgamma(2.0 - 2.0 * H));
  return 2.0 * kappa * std::sqrt(ratio);
}

/// Smooth map from an unconstrained real u onto an interval (lower, upper):
///   m(u) = lower + sp(u - lower) - sp(u - upper),  sp(x) = c log(1 + e^{x/c}).
/// It is the identity up to O(c) away from the bounds, so optimizer steps
/// on u are steps in parameter units.
struct RangeMap {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  double softness = 1e-2;

  static double sp(double x, double c) {
    const double z = x / c;
    return c * (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
  }
  static double sig(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

  double operator()(double u) const {
    const bool lo = std::isfinite(lower), hi = std::isfinite(upper);
    if (lo && hi) {
      // Evaluate from the nearer bound to avoid cancellation.
      if (u <= 0.5 * (lower + upper)) return lower + sp(u - lower, softness) - sp(u - upper, softness);
      return upper - sp(upper - u, softness) + sp(lower - u, softness);
    }
    if (lo) return lower + sp(u - lower, softness);
    if (hi) return upper - sp(upper - u, softness);
    return u;
  }

  double derivative(double u) const {
    double d = std::isfinite(lower) ? sig((u - lower) / softness) : 1.0;
    if (std::isfinite(upper)) d -= sig((u - upper) / softness);
    return d;
  }

  ad::Var operator()(const ad::Var& u) const {
    const RangeMap m = *this;
    return ad::elementwise(u, [m](double x) { return m(x); }, [m](double x) { return m.derivative(x); });
  }

  /// u with m(u) = v; v must lie strictly inside the interval.
  double inverse(double v) const {
    if (!(v > lower && v < upper))
      throw std::domain_error("RangeMap::inverse: " + std::to_string(v) + " outside (" + std::to_string(lower) +
                              ", " + std::to_string(upper) + ")");
    // m(u) <= u near the upper end and >= u near the lower end; bracket and bisect.
    double lo = v, hi = v;
    double step = softness;
    while ((*this)(lo) > v) { lo -= step; step *= 2; }
    step = softness;
    while ((*this)(hi) < v) { hi += step; step *= 2; }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(v)); ++it) {
      const double mid = 0.5 * (lo + hi);
      if ((*this)(mid) < v) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  }
};

inline RangeMap xi0_range() { return {1e-6, std::numeric_limits<double>::infinity(), 1e-3}; }
inline RangeMap hurst_range() { return {0.0, 0.5, 5e-3}; }
inline RangeMap rho_range() { return {-1.0, 1.0, 1e-2}; }
inline RangeMap eta_range() { return {0.0, std::numeric_limits<double>::infinity(), 1e-2}; }

inline RangeMap range_for(const std::string& name) {
  if (name == "xi0") return xi0_range();
  if (name == "H") return hurst_range();
  if (name == "rho") return rho_range();
  if (name == "eta") return eta_range();
  throw std::invalid_argument("range_for: unknown parameter " + name);
}

inline const std::vector<std::string>& param_names() {
  static const std::vector<std::string> names{"xi0", "H", "rho", "eta"};
  return names;
}

}  // namespace rbergomi::sim
