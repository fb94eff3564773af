#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/special_functions/digamma.hpp>

namespace rbergomi::numerics {

namespace detail {

// gamma(a, x) by the power series, valid and fast for x < a + 1.
inline double gamma_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int k = 1; k < 10000; ++k) {
    term *= x / (a + k);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x));
}

// Gamma(a, x) by the modified Lentz continued fraction, for x >= a + 1.
inline double upper_gamma_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x)) * h;
}

}  // namespace detail

/// Lower incomplete gamma function gamma(a, x) = int_0^x s^{a-1} e^{-s} ds.
inline double lower_incomplete_gamma(double a, double x) {
  if (!(a > 0.0)) throw std::domain_error("lower_incomplete_gamma: a must be > 0");
  if (!(x >= 0.0)) throw std::domain_error("lower_incomplete_gamma: x must be >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_series(a, x);
  return std::tgamma(a) - detail::upper_gamma_cf(a, x);
}

/// Scaled form x^{-a} gamma(a, x) = e^{-x} sum_k x^k / (a (a+1) ... (a+k)).
/// Finite at x = 0 (value 1/a), which is what the covariance entries need
/// when a decay rate vanishes.
struct ScaledGamma {
  double value;
  double d_da;  // derivative with respect to a
};

inline ScaledGamma scaled_lower_gamma(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw std::domain_error("scaled_lower_gamma: bad domain");
  double term = 1.0 / a;
  double harmonic = 1.0 / a;  // sum_{m<=k} 1/(a+m)
  double sum = term;
  double dsum = -term * harmonic;
  for (int k = 1; k < 2000; ++k) {
    term *= x / (a + k);
    harmonic += 1.0 / (a + k);
    sum += term;
    dsum -= term * harmonic;
    if (k > x && term < sum * 1e-18) break;
  }
  const double e = std::exp(-x);
  return {e * sum, e * dsum};
}

inline double digamma(double x) { return boost::math::digamma(x); }

}  // namespace rbergomi::numerics
