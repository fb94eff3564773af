#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rbergomi/market/rate_curve.hpp"
#include "rbergomi/market/surface.hpp"
#include "rbergomi/nn/control_net.hpp"
#include "rbergomi/simulator/msoe.hpp"

namespace rbergomi::calib {

/// Controls at step i: {Z (dW_perp loadings), Z_tilde (dW loadings)}, each
/// paths x (L * (N - j(i) + 1)), maturity blocks of width L side by side.
struct Controls {
  ad::Var z;
  ad::Var z_tilde;
};
using ControlFn = std::function<Controls(int i, const ad::Var& inputs)>;

struct RollResult {
  ad::Var loss;
  std::vector<ad::Var> terminal;  // Y^j at k(j), paths x L
  std::vector<ad::Var> payoff;    // G^j, paths x L
};

/// Network inputs at step i: (V_0, V_1, ..., V_i, X_i), paths x (i + 2).
inline ad::Var control_inputs(const sim::PathBatch& paths, int i) {
  std::vector<ad::Var> cols(paths.V.begin(), paths.V.begin() + i + 1);
  cols.push_back(paths.X[static_cast<std::size_t>(i)]);
  return ad::concat_cols(cols);
}

/// Forward Euler roll of the price BSDEs seeded with market prices,
///   Y_{i+1} = (1 + r(t_i) h) Y_i + Z_tilde_i dW_i + Z_i dW_perp_i,
/// and the terminal-matching loss (1/(LN)) sum_j E|G(X_{k(j)}) - Y^j_{k(j)}|^2
/// with G_l = (exp(X + int_0^{T_j} r) - K_l)^+.
inline RollResult bsde_roll(const sim::PathBatch& paths, const market::MarketGrid& mg, const Matrix& prices,
                            const market::RateCurve& rates, const ControlFn& controls) {
  const auto& grid = paths.grid;
  const auto k = mg.steps_on(grid);
  const Eigen::Index L = static_cast<Eigen::Index>(mg.L());
  const int N = static_cast<int>(mg.N());
  if (prices.rows() != L || prices.cols() != N) throw ShapeError("bsde_roll: price matrix does not match the market grid");
  const double h = grid.step();

  std::vector<ad::Var> Y;
  for (int j = 0; j < N; ++j) Y.push_back(ad::constant(Matrix(prices.col(j).transpose())));  // broadcast over paths
  Matrix strikes(1, L);
  for (Eigen::Index l = 0; l < L; ++l) strikes(0, l) = mg.strikes[static_cast<std::size_t>(l)];

  RollResult out;
  out.terminal.resize(static_cast<std::size_t>(N));
  out.payoff.resize(static_cast<std::size_t>(N));
  std::vector<ad::Var> terms;
  for (int i = 0; i < k.back(); ++i) {
    const int j0 = market::maturity_index(k, i);
    const Eigen::Index width = L * (N - j0);
    const Controls c = controls(i, control_inputs(paths, i));
    if (c.z.cols() != width || c.z_tilde.cols() != width || c.z.rows() != paths.paths || c.z_tilde.rows() != paths.paths)
      throw ShapeError("bsde_roll: controls at step " + std::to_string(i) + " must be " + std::to_string(paths.paths) +
                       " x " + std::to_string(width));
    const ad::Var dw = ad::constant(paths.dW[static_cast<std::size_t>(i)]);
    const ad::Var dwp = ad::constant(paths.dWp[static_cast<std::size_t>(i)]);
    const double growth = 1.0 + rates(grid.time(i)) * h;
    for (int j = j0; j < N; ++j) {
      const int m = j - j0;
      const ad::Var zt = ad::slice_cols(c.z_tilde, static_cast<Eigen::Index>(m) * L, L);
      const ad::Var z = ad::slice_cols(c.z, static_cast<Eigen::Index>(m) * L, L);
      Y[static_cast<std::size_t>(j)] =
          ad::add(ad::add(ad::scale(Y[static_cast<std::size_t>(j)], growth), ad::mul(zt, dw)), ad::mul(z, dwp));
      if (i + 1 == k[static_cast<std::size_t>(j)]) {
        const ad::Var S = ad::exp(ad::add(paths.X[static_cast<std::size_t>(i + 1)], rates.integral(mg.maturities[static_cast<std::size_t>(j)])));
        const ad::Var G = ad::relu(ad::sub(S, ad::constant(strikes)));
        out.terminal[static_cast<std::size_t>(j)] = Y[static_cast<std::size_t>(j)];
        out.payoff[static_cast<std::size_t>(j)] = G;
        terms.push_back(ad::mean_rows(ad::sum_cols(ad::square(ad::sub(G, Y[static_cast<std::size_t>(j)])))));
      }
    }
  }
  ad::Var total = terms.front();
  for (std::size_t t = 1; t < terms.size(); ++t) total = ad::add(total, terms[t]);
  out.loss = ad::scale(total, 1.0 / static_cast<double>(L * N));
  return out;
}

/// The per-step networks mu_i (Z) and phi_i (Z_tilde), i = 0..n-1.
class ControlNets {
 public:
  ControlNets() = default;
  ControlNets(const market::MarketGrid& mg, const numerics::TimeGrid& grid, nn::ControlNetConfig cfg = {}) {
    const auto k = mg.steps_on(grid);
    const int L = static_cast<int>(mg.L()), N = static_cast<int>(mg.N());
    for (int i = 0; i < k.back(); ++i) {
      const int outputs = L * (N - market::maturity_index(k, i));
      mu_.emplace_back("mu/" + std::to_string(i), i + 2, outputs, cfg);
      phi_.emplace_back("phi/" + std::to_string(i), i + 2, outputs, cfg);
    }
  }

  void add_to(nn::ParameterStore& store, std::uint64_t seed) const {
    for (std::size_t i = 0; i < mu_.size(); ++i) {
      mu_[i].init(store, seed);
      phi_[i].init(store, seed);
    }
  }

  ControlFn controls(const nn::ParameterStore& store, const nn::Bindings& p, nn::Mode mode,
                     std::vector<nn::BatchNormUpdate>* updates) const {
    return [this, &store, &p, mode, updates](int i, const ad::Var& x) {
      const auto u = static_cast<std::size_t>(i);
      return Controls{mu_.at(u).forward(store, p, x, mode, updates), phi_.at(u).forward(store, p, x, mode, updates)};
    };
  }

  std::size_t size() const { return mu_.size(); }
  const nn::ControlNet& mu(std::size_t i) const { return mu_.at(i); }
  const nn::ControlNet& phi(std::size_t i) const { return phi_.at(i); }

  /// Closed-form trainable count over all 2n networks.
  static std::size_t parameter_count(const market::MarketGrid& mg, const numerics::TimeGrid& grid,
                                     const nn::ControlNetConfig& cfg = {}) {
    const auto k = mg.steps_on(grid);
    std::size_t n = 0;
    for (int i = 0; i < k.back(); ++i)
      n += 2 * nn::ControlNet::parameter_count(i + 2, static_cast<int>(mg.L()) * (static_cast<int>(mg.N()) - market::maturity_index(k, i)), cfg);
    return n;
  }

 private:
  std::vector<nn::ControlNet> mu_, phi_;
};

}  // namespace rbergomi::calib
