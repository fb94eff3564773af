#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "rbergomi/autodiff/ops.hpp"
#include "rbergomi/errors.hpp"
#include "rbergomi/io/csv.hpp"
#include "rbergomi/numerics/rng.hpp"
#include "rbergomi/numerics/soe.hpp"
#include "rbergomi/numerics/time_grid.hpp"
#include "rbergomi/simulator/covariance.hpp"
#include "rbergomi/simulator/params.hpp"

namespace rbergomi::sim {

struct SimulationSettings {
  int n_exp = 0;          // 0: smallest count meeting soe_tol over the whole H range
  double soe_tol = 1e-4;  // relative sup-norm tolerance of the kernel fit
};

/// Number of exponentials that meets `tol` on [h, T] for every H in a
/// fixed sweep of (0, 1/2). Nodes only depend on (terms, h, T), so one
/// count serves all H visited during a run.
inline int soe_terms_for_grid(double h, double horizon, double tol) {
  int terms = 1;
  for (double H : {0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.49})
    terms = std::max(terms, numerics::fit_soe(H, h, horizon, tol).terms());
  return terms;
}

inline numerics::SoeApprox kernel_for_grid(const numerics::TimeGrid& grid, const SimulationSettings& s,
                                           double H = 0.1) {
  if (grid.steps() == 1) return numerics::soe_with_terms(1, H, 0.5 * grid.step(), grid.horizon());
  const int terms = s.n_exp > 0 ? s.n_exp : soe_terms_for_grid(grid.step(), grid.horizon(), s.soe_tol);
  return numerics::soe_with_terms(terms, H, grid.step(), grid.horizon());
}

/// One step of the history-factor recursion
///   I_F(t_i) = e^{-lambda_now h} (V * I_F(t_{i-1}) + J_{i-1}),
/// where V rescales the previous factor from the old decay rate to the new
/// one by the ratio of standard deviations; V = 1 when rates are unchanged.
/// `t_prev` is t_{i-1}. Columns of `prev` and `increment` are nodes.
inline Matrix history_factor_step(const Matrix& prev, const Matrix& increment, const std::vector<double>& nodes_now,
                                  const std::vector<double>& nodes_prev, double h, double t_prev) {
  const Eigen::Index n = static_cast<Eigen::Index>(nodes_now.size());
  if (prev.cols() != n || increment.cols() != n || static_cast<Eigen::Index>(nodes_prev.size()) != n)
    throw ShapeError("history_factor_step: node count mismatch");
  // Variance of int_0^{t_prev - h} e^{-2 lambda (t_prev - s)} ds.
  auto var = [h, t_prev](double lambda) {
    const double span = t_prev - h;
    if (lambda == 0.0) return span;
    return std::exp(-2.0 * lambda * h) * (-std::expm1(-2.0 * lambda * span)) / (2.0 * lambda);
  };
  Matrix out(prev.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double scale = 1.0;
    if (nodes_now[j] != nodes_prev[j] && t_prev > h) scale = std::sqrt(var(nodes_now[j]) / var(nodes_prev[j]));
    const double decay = std::exp(-nodes_now[j] * h);
    out.col(j) = decay * (scale * prev.col(j) + increment.col(j));
  }
  return out;
}

/// Euler step of the log-price:
///   X_i = X_{i-1} - V_{i-1} h / 2 + sqrt(V_{i-1}) (rho dW_i + sqrt(1 - rho^2) dW_perp_i).
inline ad::Var log_price_step(const ad::Var& X_prev, const ad::Var& V_prev, const ad::Var& rho_prev, const Matrix& dw,
                              const Matrix& dwp, double h) {
  const ad::Var shock = ad::add(ad::mul(rho_prev, ad::constant(dw)),
                                ad::mul(ad::sqrt(ad::sub(ad::constant(1.0), ad::square(rho_prev))), ad::constant(dwp)));
  return ad::add(ad::sub(X_prev, ad::scale(V_prev, 0.5 * h)), ad::mul(ad::sqrt(V_prev), shock));
}

/// Parameter values on the grid as tape values. Each entry is 1x1 (constant
/// in time) or 1 x (n+1) (value at t_0..t_n).
struct ModelCurves {
  ad::Var xi0, H, rho, eta, v0;

  static ad::Var at(const ad::Var& c, int i) { return c.cols() == 1 ? c : ad::slice_cols(c, i, 1); }

  static ModelCurves from_params(const ModelParams& p, const numerics::TimeGrid& grid) {
    auto sample = [&](const ParamCurve& c) {
      if (c.is_constant()) return ad::constant(c.constant);
      Matrix m(1, grid.steps() + 1);
      for (int i = 0; i <= grid.steps(); ++i) m(0, i) = c(grid.time(i));
      return ad::constant(m);
    };
    return {sample(p.xi0), sample(p.H), sample(p.rho), sample(p.eta), ad::constant(p.spot_variance())};
  }
};

/// Simulated trajectories. Per-time columns are [paths x 1].
struct PathBatch {
  int paths = 0;
  numerics::TimeGrid grid{1, 1.0};
  std::uint64_t seed = 0;
  int n_exp = 0;
  int factor_rank = 0;
  std::vector<ad::Var> X;  // t_0..t_n
  std::vector<ad::Var> V;  // t_0..t_n
  std::vector<ad::Var> I;  // Volterra integral approximation, I[0] = 0
  std::vector<Matrix> dW;  // step i stored at i-1
  std::vector<Matrix> dWp;

  Matrix stack(const std::vector<ad::Var>& cols) const {
    Matrix m(paths, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = cols[i].value();
    return m;
  }
  Matrix stack(const std::vector<Matrix>& cols) const {
    Matrix m(paths, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = cols[i];
    return m;
  }
  Matrix X_matrix() const { return stack(X); }
  Matrix V_matrix() const { return stack(V); }
  Matrix I_matrix() const { return stack(I); }
  Matrix dW_matrix() const { return stack(dW); }
  Matrix dWp_matrix() const { return stack(dWp); }
};

/// mSOE scheme. Draws for (path b, step i) come from the counter-based
/// stream (seed, path_offset + b, i): the first `rank` normals drive
/// (dW, J), the next one the remainder of I_N, the last one dW_perp.
/// Tracked entries of `curves` make every output differentiable.
inline PathBatch simulate(const ModelCurves& curves, const numerics::TimeGrid& grid, int paths, std::uint64_t seed,
                          const SimulationSettings& settings, double x0, std::uint32_t path_offset = 0) {
  if (paths <= 0) throw std::invalid_argument("simulate: paths must be positive");
  const int n = grid.steps();
  const double h = grid.step();
  const auto soe = kernel_for_grid(grid, settings);
  const auto factor = StepFactor::build(soe.nodes, h);
  const int r = factor.rank;
  const Eigen::Index nodes = soe.terms();

  PathBatch out;
  out.paths = paths;
  out.grid = grid;
  out.seed = seed;
  out.n_exp = static_cast<int>(nodes);
  out.factor_rank = r;
  out.X.push_back(ad::constant(Matrix::Constant(paths, 1, x0)));
  out.V.push_back(ad::mul(ad::constant(Matrix::Ones(paths, 1)), curves.v0));
  out.I.push_back(ad::constant(Matrix::Zero(paths, 1)));

  const Matrix projection_t = factor.projection.transpose();
  const Matrix increments_t = factor.increments.transpose();
  Matrix history = Matrix::Zero(paths, nodes);
  Matrix eps(paths, r + 2);
  const double sqrt_h = std::sqrt(h);

  for (int i = 1; i <= n; ++i) {
    for (int b = 0; b < paths; ++b)
      numerics::RngStream{seed, path_offset + static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(i)}
          .fill_normals(eps.row(b).data(), static_cast<std::size_t>(r + 2));
    const Matrix eps_a = eps.leftCols(r);
    const Matrix theta_a = eps_a * increments_t;  // (dW, J^1..J^N)
    Matrix dw = theta_a.col(0);
    Matrix dwp = eps.col(r + 1) * sqrt_h;

    const ad::Var H_i = ModelCurves::at(curves.H, i);
    const double hv = H_i.scalar();
    if (!(hv > 0.0 && hv < 0.5 + 1e-15))
      throw NumericalFailure("simulate: H(t_" + std::to_string(i) + ") = " + std::to_string(hv) + " out of range");
    const auto lc = local_covariance(soe.nodes, h, hv);
    const ad::Var c = ad::scalar_function(H_i, lc.value, lc.derivative);
    const ad::Var ell = ad::matmul(c, ad::constant(projection_t));  // 1 x r
    ad::Var rem_var = ad::sub(ad::pow(h, ad::scale(H_i, 2.0)), ad::sum(ad::square(ell)));
    if (rem_var.scalar() < 0.0) {
      if (rem_var.scalar() < -1e-12 * lc.variance)
        throw NumericalFailure("simulate: negative conditional variance at step " + std::to_string(i));
      rem_var = ad::constant(0.0);
    }
    const ad::Var local = ad::add(ad::matmul(ad::constant(eps_a), ad::transpose(ell)),
                                  ad::mul(ad::constant(Matrix(eps.col(r))), ad::sqrt(rem_var)));

    ad::Var I_i = local;
    if (i > 1) {
      const ad::Var w = ad::scalar_function(H_i, [&] {
        const auto v = soe.weights_at(hv);
        return Matrix(Eigen::Map<const Matrix>(v.data(), 1, nodes));
      }(), [&] {
        const auto v = soe.weight_derivatives_at(hv);
        return Matrix(Eigen::Map<const Matrix>(v.data(), 1, nodes));
      }());
      const ad::Var past = ad::matmul(ad::constant(history), ad::transpose(w));
      I_i = ad::add(I_i, ad::mul(ad::sqrt(ad::scale(H_i, 2.0)), past));
    }

    const double t = grid.time(i);
    const ad::Var eta_i = ModelCurves::at(curves.eta, i);
    const ad::Var drift = ad::scale(ad::square(eta_i), 0.5);
    const ad::Var exponent = ad::sub(ad::mul(eta_i, I_i), ad::mul(drift, ad::pow(t, ad::scale(H_i, 2.0))));
    const ad::Var V_i = ad::mul(ModelCurves::at(curves.xi0, i), ad::exp(exponent));

    const ad::Var X_i = log_price_step(out.X.back(), out.V.back(), ModelCurves::at(curves.rho, i - 1), dw, dwp, h);

    if (!V_i.value().allFinite() || !X_i.value().allFinite())
      throw NumericalFailure("simulate: non-finite state at step " + std::to_string(i) + " (H=" +
                             std::to_string(hv) + ", eta=" + std::to_string(eta_i.value()(0, 0)) + ")");

    out.X.push_back(X_i);
    out.V.push_back(V_i);
    out.I.push_back(I_i);
    out.dW.push_back(std::move(dw));
    out.dWp.push_back(std::move(dwp));

    const Matrix J = theta_a.rightCols(nodes);
    history = history_factor_step(history, J, soe.nodes, soe.nodes, h, t);
  }
  return out;
}

inline PathBatch simulate(const ModelParams& params, const numerics::TimeGrid& grid, int paths, std::uint64_t seed,
                          const SimulationSettings& settings, double x0) {
  return simulate(ModelCurves::from_params(params, grid), grid, paths, seed, settings, x0);
}

/// CSV with header path,i,t,X,V,dW,dWp and one row per (path, step i >= 1).
inline void write_path_dump(std::ostream& os, const PathBatch& batch) {
  os << "path,i,t,X,V,dW,dWp\n";
  const int n = batch.grid.steps();
  for (int b = 0; b < batch.paths; ++b) {
    for (int i = 1; i <= n; ++i) {
      os << b << ',' << i << ',' << io::format_double(batch.grid.time(i)) << ','
         << io::format_double(batch.X[i].value()(b, 0)) << ',' << io::format_double(batch.V[i].value()(b, 0)) << ','
         << io::format_double(batch.dW[i - 1](b, 0)) << ',' << io::format_double(batch.dWp[i - 1](b, 0)) << '\n';
    }
  }
}

}  // namespace rbergomi::sim
