#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rbergomi/errors.hpp"

namespace rbergomi::pricing {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Lognormal call price with constant volatility sigma and rate r.
inline double flat_vol_price(double S0, double K, double T, double r, double sigma) {
  if (!(S0 > 0.0)) throw std::domain_error("flat_vol_price: S0 must be positive");
  if (!(T > 0.0)) throw std::domain_error("flat_vol_price: T must be positive");
  if (!(sigma >= 0.0)) throw std::domain_error("flat_vol_price: sigma must be nonnegative");
  const double df = std::exp(-r * T);
  if (K <= 0.0) return S0 - K * df;
  const double sd = sigma * std::sqrt(T);
  if (sd < 1e-300) return std::max(S0 - K * df, 0.0);
  const double d1 = (std::log(S0 / K) + r * T) / sd + 0.5 * sd;
  return S0 * normal_cdf(d1) - K * df * normal_cdf(d1 - sd);
}

struct ImpliedVol {
  double sigma = 0.0;
  bool at_lower_bound = false;
};

/// Volatility reproducing `price` to 1e-10: bisection on a bracket followed
/// by secant polishing.
inline ImpliedVol implied_vol(double price, double S0, double K, double T, double r) {
  const double lower = std::max(S0 - K * std::exp(-r * T), 0.0);
  const double tol = 1e-10;
  if (!(price >= lower - tol) || !(price < S0))
    throw OutOfBounds("implied_vol: price " + std::to_string(price) + " outside [" + std::to_string(lower) + ", " +
                      std::to_string(S0) + ")");
  if (price - lower <= tol) return {0.0, true};
  auto f = [&](double s) { return flat_vol_price(S0, K, T, r, s) - price; };
  double lo = 0.0, hi = 1.0;
  while (f(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e3) throw OutOfBounds("implied_vol: price too close to the upper bound");
  }
  for (int it = 0; it < 60 && hi - lo > 1e-6; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  double a = lo, b = hi, fa = f(a), fb = f(b);
  for (int it = 0; it < 100 && std::abs(fb) >= tol * 1e-2 && fb != fa; ++it) {
    const double c = b - fb * (b - a) / (fb - fa);
    a = b;
    fa = fb;
    b = std::clamp(c, lo, hi);
    fb = f(b);
  }
  if (std::abs(fb) >= tol) {
    // Secant stalled; finish by bisection.
    for (int it = 0; it < 200 && std::abs(f(0.5 * (lo + hi))) >= tol; ++it) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) < 0.0 ? lo : hi) = mid;
    }
    b = 0.5 * (lo + hi);
  }
  return {b, false};
}

}  // namespace rbergomi::pricing
