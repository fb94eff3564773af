#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "rbergomi/errors.hpp"
#include "rbergomi/numerics/special.hpp"

namespace rbergomi::numerics {

/// Sum-of-exponentials approximation x^{H-1/2} ~ sum_j w_j exp(-lambda_j x)
/// on [cutoff, horizon].
///
/// Built from x^{-a} = Gamma(a)^{-1} int exp(-x e^s + a s) ds, a = 1/2 - H,
/// discretized by the trapezoidal rule on a uniform grid in s. All grid
/// terms below the first node are lumped into a node at lambda = 0. Nodes
/// depend only on (terms, cutoff, horizon); weights are closed-form in H,
/// so they can be re-evaluated and differentiated at any H.
struct SoeApprox {
  double H = 0.0;
  double cutoff = 0.0;
  double horizon = 0.0;
  std::vector<double> nodes;    // lambda_j, ascending, nodes[0] == 0
  std::vector<double> weights;  // omega_j at H
  double sup_error = 0.0;       // measured max |x^{H-1/2} - sum|, absolute
  double s_low = 0.0;           // first trapezoid abscissa
  double s_step = 0.0;          // trapezoid spacing

  int terms() const { return static_cast<int>(nodes.size()); }

  double operator()(double x) const {
    double s = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) s += weights[j] * std::exp(-nodes[j] * x);
    return s;
  }

  /// Weights for another Hurst index on the same nodes.
  std::vector<double> weights_at(double h_index) const;
  /// d omega_j / dH on the same nodes.
  std::vector<double> weight_derivatives_at(double h_index) const;
};

namespace detail {

struct SoeLayout {
  double s_low;
  double s_step;
};

// Truncation window for accuracy parameter acc = ln(1/eps).
inline void soe_window(double acc, double cutoff, double horizon, double& s_low, double& s_high,
                       double& s_step) {
  s_high = std::log((acc + std::log(acc + 1.0)) / cutoff);
  s_low = -0.5 * acc - std::log(horizon);
  s_step = std::numbers::pi * std::numbers::pi / acc;
}

inline SoeLayout soe_layout(int terms, double cutoff, double horizon) {
  // Pick the accuracy parameter whose window holds exactly terms - 1 grid
  // points; the span/step ratio is increasing in acc.
  const int intervals = std::max(terms - 2, 1);
  double lo = 0.1, hi = 400.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double sl, sh, ds;
    soe_window(mid, cutoff, horizon, sl, sh, ds);
    if ((sh - sl) / ds > intervals) hi = mid; else lo = mid;
  }
  double sl, sh, ds;
  soe_window(lo, cutoff, horizon, sl, sh, ds);
  return {sl, (sh - sl) / intervals};
}

inline void soe_weights(int terms, double horizon, const SoeLayout& layout, double h_index,
                        std::vector<double>* w, std::vector<double>* dw) {
  const double a = 0.5 - h_index;
  if (w) w->assign(terms, 0.0);
  if (dw) dw->assign(terms, 0.0);
  if (a <= 0.0) {
    // Constant kernel.
    if (w) (*w)[0] = 1.0;
    return;
  }
  if (terms == 1) {
    const double v = std::pow(horizon, -a);
    if (w) (*w)[0] = v;
    if (dw) (*dw)[0] = std::log(horizon) * v;  // d/dH = -d/da
    return;
  }
  const double lg = std::lgamma(a);
  const double psi = digamma(a);
  const double ds = layout.s_step;
  // Lumped tail: ds * sum_{k>=1} exp(a (s_low - k ds)) / Gamma(a).
  {
    const double denom = -std::expm1(-a * ds);
    const double v = ds * std::exp(a * (layout.s_low - ds) - lg) / denom;
    const double dlog_da = (layout.s_low - ds) - ds * std::exp(-a * ds) / denom - psi;
    if (w) (*w)[0] = v;
    if (dw) (*dw)[0] = -v * dlog_da;
  }
  for (int k = 0; k < terms - 1; ++k) {
    const double s = layout.s_low + k * ds;
    const double v = ds * std::exp(a * s - lg);
    if (w) (*w)[k + 1] = v;
    if (dw) (*dw)[k + 1] = -v * (s - psi);
  }
}

inline double soe_sup_error(const SoeApprox& soe) {
  const double a = soe.cutoff, b = soe.horizon;
  const int m = 4000;
  double err = 0.0;
  auto check = [&](double x) {
    err = std::max(err, std::abs(std::pow(x, soe.H - 0.5) - soe(x)));
  };
  const double la = std::log(a), lb = std::log(b);
  for (int i = 0; i <= m; ++i) {
    check(std::exp(la + (lb - la) * i / m));
    check(a + (b - a) * i / m);
  }
  return err;
}

}  // namespace detail

/// Candidate approximation with a fixed number of terms.
inline SoeApprox soe_with_terms(int terms, double h_index, double cutoff, double horizon) {
  if (terms < 1) throw std::invalid_argument("soe_with_terms: terms must be >= 1");
  if (!(h_index > 0.0 && h_index <= 0.5)) throw std::domain_error("soe: H must be in (0, 1/2]");
  if (!(cutoff > 0.0 && cutoff < horizon)) throw std::domain_error("soe: need 0 < cutoff < horizon");
  SoeApprox soe;
  soe.H = h_index;
  soe.cutoff = cutoff;
  soe.horizon = horizon;
  detail::SoeLayout layout{0.0, 0.0};
  soe.nodes.assign(terms, 0.0);
  if (terms > 1) {
    layout = detail::soe_layout(terms, cutoff, horizon);
    for (int k = 0; k < terms - 1; ++k) soe.nodes[k + 1] = std::exp(layout.s_low + k * layout.s_step);
  }
  soe.s_low = layout.s_low;
  soe.s_step = layout.s_step;
  detail::soe_weights(terms, horizon, layout, h_index, &soe.weights, nullptr);
  soe.sup_error = detail::soe_sup_error(soe);
  return soe;
}

inline std::vector<double> SoeApprox::weights_at(double h_index) const {
  std::vector<double> w;
  detail::soe_weights(terms(), horizon, {s_low, s_step}, h_index, &w, nullptr);
  return w;
}

inline std::vector<double> SoeApprox::weight_derivatives_at(double h_index) const {
  std::vector<double> dw;
  detail::soe_weights(terms(), horizon, {s_low, s_step}, h_index, nullptr, &dw);
  return dw;
}

/// Smallest candidate meeting sup|x^{H-1/2} - soe| <= tol * cutoff^{H-1/2}.
inline SoeApprox fit_soe(double h_index, double cutoff, double horizon, double tol,
                         int max_terms = 64) {
  if (!(tol > 0.0)) throw std::domain_error("fit_soe: tol must be positive");
  const double target = tol * std::pow(cutoff, h_index - 0.5);
  for (int m = 1; m <= max_terms; ++m) {
    SoeApprox soe = soe_with_terms(m, h_index, cutoff, horizon);
    if (soe.sup_error <= target) return soe;
  }
  throw ToleranceUnreachable("fit_soe: tolerance " + std::to_string(tol) + " not reached with " +
                             std::to_string(max_terms) + " terms");
}

}  // namespace rbergomi::numerics
