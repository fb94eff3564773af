#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rbergomi/calibrator/bsde.hpp"
#include "rbergomi/calibrator/theta.hpp"
#include "rbergomi/nn/optimizer.hpp"
#include "rbergomi/pricing/oracle.hpp"

namespace rbergomi::calib {

/// Market side of a calibration: the grid zeta, prices on it and the rate
/// curve. `quoted`, when present, holds prices at the original quoted
/// maturities; model prices are then spline-interpolated in maturity to
/// those before comparison.
struct MarketData {
  market::MarketGrid grid;
  Matrix prices;
  market::RateCurve rates{0.05};
  double x0 = std::log(100.0);
  std::optional<double> v0;
  std::optional<market::PriceMatrix> quoted;
};

struct ErrorReport {
  double F = 0.0;
  Matrix model;     // model prices on the comparison grid
  Matrix relative;  // |model - market| / market, inf where market is 0
  double avg_rel = 0.0;
  double max_rel = 0.0;
  bool zero_price = false;
};

/// Elementwise relative error with its mean and maximum.
inline ErrorReport relative_error(const Matrix& model, const Matrix& market) {
  if (model.rows() != market.rows() || model.cols() != market.cols()) throw ShapeError("relative_error: shape mismatch");
  ErrorReport r;
  r.model = model;
  r.relative.resize(model.rows(), model.cols());
  for (Eigen::Index k = 0; k < model.size(); ++k) {
    const double p = market.data()[k];
    if (p == 0.0) {
      r.zero_price = true;
      r.relative.data()[k] = std::numeric_limits<double>::infinity();
    } else {
      r.relative.data()[k] = std::abs(model.data()[k] - p) / std::abs(p);
    }
  }
  r.avg_rel = r.relative.mean();
  r.max_rel = r.relative.maxCoeff();
  r.F = (model - market).squaredNorm() / static_cast<double>(model.size());
  return r;
}

/// Per-strike natural cubic spline in maturity, evaluated at `targets`.
inline Matrix interpolate_maturities(const Matrix& values, const std::vector<double>& from, const std::vector<double>& targets) {
  Matrix out(values.rows(), static_cast<Eigen::Index>(targets.size()));
  for (Eigen::Index l = 0; l < values.rows(); ++l) {
    std::vector<double> y(values.cols());
    for (Eigen::Index j = 0; j < values.cols(); ++j) y[static_cast<std::size_t>(j)] = values(l, j);
    if (from.size() == 1) {
      out.row(l).setConstant(y.front());
      continue;
    }
    const numerics::Spline1D s(from, y);
    for (std::size_t j = 0; j < targets.size(); ++j) out(l, static_cast<Eigen::Index>(j)) = s(targets[j]);
  }
  return out;
}

/// F(theta) = (1/LN) ||Y_0(theta) - P_MKT||_F^2 with Y_0 from the Monte Carlo
/// oracle under fixed settings and seed.
class TargetF {
 public:
  TargetF(const MarketData& market, pricing::OracleSettings oracle) : market_(market), oracle_(std::move(oracle)) {
    grid_ = market_.grid.grid_for_step(oracle_.step);
  }

  const numerics::TimeGrid& oracle_grid() const { return grid_; }
  const pricing::OracleSettings& settings() const { return oracle_; }

  ErrorReport operator()(const sim::ModelParams& params) const {
    const auto pm = pricing::mc_price(params, market_.grid, market_.rates, market_.x0, oracle_);
    if (!market_.quoted) return relative_error(pm.values, market_.prices);
    const Matrix at_quotes = interpolate_maturities(pm.values, market_.grid.maturities, market_.quoted->grid.maturities);
    return relative_error(at_quotes, market_.quoted->values);
  }

 private:
  MarketData market_;
  pricing::OracleSettings oracle_;
  numerics::TimeGrid grid_{1, 1.0};
};

struct TrainConfig {
  int steps = 20;  // n, BSDE grid steps over [0, T_N]
  double lr = 0.01;
  int batch = 100;
  int patience = 1;  // <= 0: never stop early
  int max_iters = 30;
  std::uint64_t seed = 1;
  nn::OptimizerConfig optimizer;
  nn::ControlNetConfig control;
  nn::ParamNetConfig param_net;
  sim::SimulationSettings simulation;
};

struct IterationRecord {
  int iteration = 0;
  double loss = 0.0;
  double F = 0.0;
  double avg_rel = 0.0;
  double max_rel = 0.0;
  std::map<std::string, double> theta;  // values at t = 0
};

struct CalibrationResult {
  std::vector<IterationRecord> trajectory;
  int best_iteration = 0;
  ErrorReport best;
  nn::ParameterStore best_store;
  sim::ModelParams best_params;
  std::string stop_reason;
  double seconds = 0.0;
};

/// Joint training of theta and the control networks on the terminal-matching
/// loss, with F(theta) evaluated after every update and early stopping on F.
class Calibrator {
 public:
  Calibrator(MarketData market, std::array<ParamInit, 4> init, TrainConfig cfg, pricing::OracleSettings oracle)
      : market_(std::move(market)),
        cfg_(cfg),
        grid_(cfg.steps, market_.grid.horizon()),
        theta_(init, cfg.param_net),
        nets_(market_.grid, grid_, cfg.control),
        target_(market_, std::move(oracle)) {
    if (cfg_.batch < 2) throw ConfigError("train.batch must be at least 2");
    if (cfg_.max_iters < 0) throw ConfigError("train.max_iters must be nonnegative");
    market_.grid.steps_on(grid_);
    theta_.add_to(store_);
    nets_.add_to(store_, numerics::derive_seed(cfg_.seed, 0x5eed));
  }

  const numerics::TimeGrid& grid() const { return grid_; }
  const Theta& theta() const { return theta_; }
  const ControlNets& nets() const { return nets_; }
  nn::ParameterStore& store() { return store_; }
  const TargetF& target() const { return target_; }

  sim::ModelParams current_params() const { return theta_.params(store_, target_.oracle_grid(), market_.v0); }

  struct Step {
    double loss;
    std::map<std::string, Matrix> grads;
    std::vector<nn::BatchNormUpdate> updates;
  };

  /// Simulates a fresh batch for iteration `iteration`, rolls the BSDE and
  /// returns the loss with its gradients.
  Step loss_and_gradient(int iteration) const {
    ad::Tape tape;
    const auto p = store_.bind(&tape);
    const auto curves = theta_.curves(p, grid_, market_.v0);
    const auto batch = sim::simulate(curves, grid_, cfg_.batch, numerics::derive_seed(cfg_.seed, static_cast<std::uint64_t>(iteration)),
                                     cfg_.simulation, market_.x0);
    Step s;
    const auto roll = bsde_roll(batch, market_.grid, market_.prices, market_.rates,
                                nets_.controls(store_, p, nn::Mode::Train, &s.updates));
    s.loss = roll.loss.scalar();
    if (std::isfinite(s.loss)) s.grads = nn::Optimizer::gradients(p, tape.backward(roll.loss));
    for (std::size_t k = 0; k < 4; ++k)
      if (theta_.is_fixed(k) && s.grads.count(Theta::prefix(k))) s.grads[Theta::prefix(k)].setZero();
    return s;
  }

  /// Runs the training loop. Iterate k is theta after k updates; each record
  /// holds F(theta_k) and the training loss on the batch drawn at theta_k.
  CalibrationResult run(const std::function<void(const IterationRecord&)>& on_iteration = {}) {
    const auto start = std::chrono::steady_clock::now();
    nn::Optimizer opt(cfg_.optimizer);
    CalibrationResult res;
    double best_F = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int k = 0;; ++k) {
      const auto params = current_params();
      const ErrorReport err = target_(params);
      if (err.F < best_F) {
        best_F = err.F;
        stale = 0;
        res.best_iteration = k;
        res.best = err;
        res.best_store = store_;
        res.best_params = params;
      } else {
        ++stale;
      }
      Step step = loss_and_gradient(k);
      IterationRecord rec{k, step.loss, err.F, err.avg_rel, err.max_rel, theta_.at_zero(store_)};
      res.trajectory.push_back(rec);
      if (on_iteration) on_iteration(rec);
      if (!std::isfinite(step.loss) || !std::isfinite(err.F)) {
        last_failure_ = store_.to_json();
        last_failure_["iteration"] = k;
        throw NumericalFailure("calibration diverged at iteration " + std::to_string(k) + " (loss " +
                               std::to_string(step.loss) + ", F " + std::to_string(err.F) + ")");
      }
      if (cfg_.patience > 0 && stale >= cfg_.patience) {
        res.stop_reason = "patience";
        break;
      }
      if (k >= cfg_.max_iters) {
        res.stop_reason = "max_iters";
        break;
      }
      opt.step(store_, step.grads, cfg_.lr);
      store_.apply(step.updates, cfg_.control.bn.momentum);
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
  }

  /// Parameter values at the BSDE grid times for the given store.
  std::vector<std::array<double, 5>> curve_table(const nn::ParameterStore& store) const {
    std::vector<double> t(static_cast<std::size_t>(grid_.steps()) + 1);
    for (int i = 0; i <= grid_.steps(); ++i) t[static_cast<std::size_t>(i)] = grid_.time(i);
    const auto s = theta_.sample(store, t);
    std::vector<std::array<double, 5>> rows;
    for (std::size_t i = 0; i < t.size(); ++i) rows.push_back({t[i], s[0][i], s[1][i], s[2][i], s[3][i]});
    return rows;
  }

  /// Store snapshot taken when the loop diverged.
  const nlohmann::json& failure_state() const { return last_failure_; }

 private:
  MarketData market_;
  TrainConfig cfg_;
  numerics::TimeGrid grid_;
  Theta theta_;
  ControlNets nets_;
  TargetF target_;
  nn::ParameterStore store_;
  nlohmann::json last_failure_;
};

}  // namespace rbergomi::calib
