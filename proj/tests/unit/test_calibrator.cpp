#include <cmath>
#include <limits>
#include <vector>

#include "catch_amalgamated.hpp"
#include "rbergomi/calibrator/calibrate.hpp"

using namespace rbergomi;
using Catch::Approx;

namespace {

market::MarketGrid small_grid() { return {{80, 90, 100}, {0.2, 0.4}}; }

pricing::OracleSettings quick_oracle() {
  pricing::OracleSettings s;
  s.step = 1.0 / 20.0;
  s.reps = 400;
  return s;
}

calib::ControlFn zero_controls() {
  return [](int, const ad::Var& x) {
    return calib::Controls{ad::constant(Matrix::Zero(x.rows(), 1)), ad::constant(Matrix::Zero(x.rows(), 1))};
  };
}

// Zero controls of the width the roll expects at step i.
calib::ControlFn zero_controls(const market::MarketGrid& mg, const std::vector<int>& k) {
  return [=](int i, const ad::Var& x) {
    const Eigen::Index w = static_cast<Eigen::Index>(mg.L()) * (static_cast<Eigen::Index>(mg.N()) - market::maturity_index(k, i));
    return calib::Controls{ad::constant(Matrix::Zero(x.rows(), w)), ad::constant(Matrix::Zero(x.rows(), w))};
  };
}

calib::MarketData synthetic_market(const market::MarketGrid& g, const pricing::OracleSettings& o) {
  const auto pm = pricing::mc_price(sim::ModelParams{}, g, 0.05, std::log(100.0), o);
  return {g, pm.values, 0.05, std::log(100.0), std::nullopt, std::nullopt};
}

const std::array<calib::ParamInit, 4> table_guess{{{0.15}, {0.12}, {-0.7}, {1.5}}};

}  // namespace

TEST_CASE("zero controls carry the market prices to maturity", "[calibrator]") {
  const auto mg = small_grid();
  const numerics::TimeGrid grid(10, 0.4);
  const auto k = mg.steps_on(grid);
  const auto paths = sim::simulate(sim::ModelParams{}, grid, 64, 3, {}, std::log(100.0));
  Matrix P(3, 2);
  P << 21.0, 22.0, 12.0, 13.5, 4.0, 6.0;

  const auto flat = calib::bsde_roll(paths, mg, P, 0.0, zero_controls(mg, k));
  double expected = 0.0;
  for (int j = 0; j < 2; ++j) {
    const Matrix Y = flat.terminal[j].value();
    for (int b = 0; b < Y.rows(); ++b)
      for (int l = 0; l < 3; ++l) CHECK(Y(b, l) == P(l, j));
    const Matrix X = paths.X[static_cast<std::size_t>(k[j])].value();
    for (int b = 0; b < 64; ++b)
      for (int l = 0; l < 3; ++l) expected += std::pow(std::max(std::exp(X(b, 0)) - mg.strikes[l], 0.0) - P(l, j), 2) / 64.0;
  }
  CHECK(flat.loss.scalar() == Approx(expected / 6.0).epsilon(1e-13));

  const auto grown = calib::bsde_roll(paths, mg, P, 0.05, zero_controls(mg, k));
  for (int j = 0; j < 2; ++j)
    for (int l = 0; l < 3; ++l) CHECK(grown.terminal[j].value()(5, l) == Approx(std::pow(1.0 + 0.05 * 0.04, k[j]) * P(l, j)).epsilon(1e-15));
}

TEST_CASE("zero payoff and zero price give zero loss", "[calibrator]") {
  const market::MarketGrid mg{{1e6, 2e6}, {0.5}};
  const numerics::TimeGrid grid(5, 0.5);
  const auto paths = sim::simulate(sim::ModelParams{}, grid, 16, 1, {}, std::log(100.0));
  const auto r = calib::bsde_roll(paths, mg, Matrix::Zero(2, 1), 0.0, zero_controls(mg, mg.steps_on(grid)));
  CHECK(r.loss.scalar() == 0.0);
}

TEST_CASE("one-step projection onto the Brownian increment", "[calibrator]") {
  const market::MarketGrid mg{{100.0}, {1.0}};
  const numerics::TimeGrid grid(1, 1.0);
  const int B = 200000;
  const auto paths = sim::simulate(sim::ModelParams{}, grid, B, 5, {}, std::log(100.0));
  const Matrix X = paths.X[1].value(), dW = paths.dW[0];
  Matrix G(B, 1);
  for (int b = 0; b < B; ++b) G(b, 0) = std::max(std::exp(X(b, 0)) - 100.0, 0.0);
  const double P = G.mean();
  const double cov = ((G.array() - P) * (dW.array() - dW.mean())).mean() * B / (B - 1.0);
  const double c_star = cov / grid.step();

  const double resolution = 0.1;
  double best_c = 0.0, best = std::numeric_limits<double>::infinity();
  for (double c = -100.0; c <= 100.0; c += resolution) {
    const auto r = calib::bsde_roll(paths, mg, Matrix::Constant(1, 1, P), 0.0, [&](int, const ad::Var& x) {
      return calib::Controls{ad::constant(Matrix::Zero(x.rows(), 1)), ad::constant(Matrix::Constant(x.rows(), 1, c))};
    });
    if (r.loss.scalar() < best) {
      best = r.loss.scalar();
      best_c = c;
    }
  }
  INFO("c* " << c_star << " grid argmin " << best_c);
  CHECK(std::abs(best_c - c_star) <= resolution);
}

TEST_CASE("loss over a doubled batch averages the two halves", "[calibrator]") {
  const auto mg = small_grid();
  const numerics::TimeGrid grid(4, 0.4);
  const auto k = mg.steps_on(grid);
  const auto curves = sim::ModelCurves::from_params(sim::ModelParams{}, grid);
  Matrix P = Matrix::Constant(3, 2, 10.0);
  auto loss = [&](int paths, std::uint32_t offset) {
    return calib::bsde_roll(sim::simulate(curves, grid, paths, 9, {}, std::log(100.0), offset), mg, P, 0.05,
                            zero_controls(mg, k)).loss.scalar();
  };
  CHECK(loss(64, 0) == Approx(0.5 * (loss(32, 0) + loss(32, 32))).epsilon(1e-12));
}

TEST_CASE("controls see only adapted inputs and shrinking blocks", "[calibrator]") {
  const market::MarketGrid mg{{90, 100}, {0.1, 0.2, 0.3}};
  const numerics::TimeGrid grid(6, 0.3);
  const auto k = mg.steps_on(grid);
  const auto paths = sim::simulate(sim::ModelParams{}, grid, 8, 2, {}, std::log(100.0));
  std::vector<int> widths;
  calib::bsde_roll(paths, mg, Matrix::Constant(2, 3, 5.0), 0.0, [&](int i, const ad::Var& x) {
    CHECK(x.cols() == i + 2);
    for (int c = 0; c <= i; ++c) CHECK(x.value().col(c) == paths.V[static_cast<std::size_t>(c)].value());
    CHECK(x.value().col(i + 1) == paths.X[static_cast<std::size_t>(i)].value());
    const int w = 2 * (3 - market::maturity_index(k, i));
    widths.push_back(w);
    return calib::Controls{ad::constant(Matrix::Zero(x.rows(), w)), ad::constant(Matrix::Zero(x.rows(), w))};
  });
  CHECK(widths == std::vector<int>{6, 6, 4, 4, 2, 2});
  CHECK_THROWS_AS(calib::bsde_roll(paths, mg, Matrix::Constant(2, 3, 5.0), 0.0, zero_controls()), ShapeError);
  CHECK_THROWS_AS(calib::bsde_roll(paths, mg, Matrix::Constant(3, 3, 5.0), 0.0, zero_controls(mg, k)), ShapeError);
}

TEST_CASE("control network family and its closed-form size", "[calibrator]") {
  const auto mg = small_grid();
  const numerics::TimeGrid grid(8, 0.4);
  calib::ControlNets nets(mg, grid);
  CHECK(nets.size() == 8);
  CHECK(nets.mu(0).inputs() == 2);
  CHECK(nets.mu(0).outputs() == 6);
  CHECK(nets.phi(7).inputs() == 9);
  CHECK(nets.phi(7).outputs() == 3);
  nn::ParameterStore store;
  nets.add_to(store, 1);
  std::size_t closed = 0;
  for (int i = 0; i < 8; ++i) {
    const int in = i + 2, out = 3 * (i < 4 ? 2 : 1);
    closed += 2 * (2 * in + 32 * in + 64 + 1024 + 64 + 35 * out);
  }
  CHECK(store.count() == closed);
  CHECK(calib::ControlNets::parameter_count(mg, grid) == closed);
}

TEST_CASE("relative error metrics", "[calibrator]") {
  Matrix P(2, 2);
  P << 10, 20, 30, 40;
  const auto same = calib::relative_error(P, P);
  CHECK(same.avg_rel == 0.0);
  CHECK(same.max_rel == 0.0);
  CHECK(same.F == 0.0);
  const auto up = calib::relative_error(P * 1.01, P);
  CHECK(up.relative.minCoeff() == Approx(0.01));
  CHECK(up.relative.maxCoeff() == Approx(0.01));
  CHECK(up.F == Approx((0.01 * 0.01) * (100 + 400 + 900 + 1600) / 4.0));
  Matrix Z = P;
  Z(1, 1) = 0.0;
  const auto z = calib::relative_error(P, Z);
  CHECK(z.zero_price);
  CHECK(std::isinf(z.max_rel));
}

TEST_CASE("target F with common random numbers", "[calibrator]") {
  const market::MarketGrid mg{{90, 100, 110}, {0.5, 1.0}};
  auto o = quick_oracle();
  o.reps = 4000;
  const auto md = synthetic_market(mg, o);
  const calib::TargetF F(md, o);
  CHECK(F(sim::ModelParams{}).F == 0.0);
  sim::ModelParams guess{0.15, 0.12, -0.7, 1.5, std::nullopt};
  const double at_guess = F(guess).F;
  double noise = 0.0;
  for (std::uint64_t seed : {2, 3, 4}) {
    auto other = o;
    other.seed = seed;
    noise = std::max(noise, calib::TargetF(md, other)(sim::ModelParams{}).F);
  }
  CHECK(noise > 0.0);
  CHECK(at_guess > 5.0 * noise);
}

TEST_CASE("zero learning rate keeps the initial guess", "[calibrator]") {
  const auto mg = small_grid();
  const auto o = quick_oracle();
  calib::TrainConfig cfg;
  cfg.steps = 8;
  cfg.lr = 0.0;
  cfg.batch = 16;
  cfg.patience = 0;
  cfg.max_iters = 3;
  calib::Calibrator c(synthetic_market(mg, o), table_guess, cfg, o);
  const auto r = c.run();
  REQUIRE(r.trajectory.size() == 4);
  for (const auto& t : r.trajectory) {
    CHECK(t.F == r.trajectory.front().F);
    CHECK(t.theta.at("xi0") == Approx(0.15).epsilon(1e-12));
    CHECK(t.theta.at("eta") == Approx(1.5).epsilon(1e-12));
  }
  CHECK(r.best_iteration == 0);
  CHECK(r.stop_reason == "max_iters");
}

TEST_CASE("early stopping returns the minimum-F iterate", "[calibrator]") {
  const auto mg = small_grid();
  const auto o = quick_oracle();
  calib::TrainConfig cfg;
  cfg.steps = 8;
  cfg.batch = 32;
  cfg.lr = 0.02;
  for (int patience : {0, 1, 2}) {
    cfg.patience = patience;
    cfg.max_iters = 12;
    calib::Calibrator c(synthetic_market(mg, o), table_guess, cfg, o);
    const auto r = c.run();
    std::size_t arg = 0;
    for (std::size_t i = 1; i < r.trajectory.size(); ++i)
      if (r.trajectory[i].F < r.trajectory[arg].F) arg = i;
    CHECK(r.best_iteration == static_cast<int>(arg));
    CHECK(r.best.F == r.trajectory[arg].F);
    CHECK(c.target()(r.best_params).F == r.best.F);
    if (patience > 0 && r.stop_reason == "patience") {
      const auto n = r.trajectory.size();
      for (std::size_t i = n - static_cast<std::size_t>(patience); i < n; ++i) CHECK(r.trajectory[i].F >= r.best.F);
    }
    if (patience == 0) CHECK(r.trajectory.size() == 13);
  }
}

TEST_CASE("loss gradient in theta matches finite differences", "[calibrator]") {
  const auto mg = small_grid();
  const auto o = quick_oracle();
  calib::TrainConfig cfg;
  cfg.steps = 8;
  cfg.batch = 16;
  calib::Calibrator c(synthetic_market(mg, o), table_guess, cfg, o);
  const auto step = c.loss_and_gradient(0);
  for (const auto& name : sim::param_names()) {
    const std::string key = "theta/" + name;
    const double u = c.store().at(key)(0, 0), eps = 1e-6;
    c.store().at(key)(0, 0) = u + eps;
    const double up = c.loss_and_gradient(0).loss;
    c.store().at(key)(0, 0) = u - eps;
    const double down = c.loss_and_gradient(0).loss;
    c.store().at(key)(0, 0) = u;
    const double fd = (up - down) / (2 * eps), an = step.grads.at(key)(0, 0);
    INFO(name << ": analytic " << an << " fd " << fd);
    CHECK(std::abs(an - fd) <= 1e-5 * std::max(std::abs(an), 1.0));
  }
}

TEST_CASE("time-dependent parameter nets start at the guess", "[calibrator]") {
  std::array<calib::ParamInit, 4> init = table_guess;
  init[0].net = true;
  init[2].net = true;
  calib::Theta theta(init);
  nn::ParameterStore store;
  theta.add_to(store);
  CHECK(store.contains("theta/xi0/w1"));
  CHECK(store.contains("theta/H"));
  const numerics::TimeGrid grid(10, 1.0);
  const auto curves = theta.curves(store.bind(nullptr), grid, std::nullopt);
  CHECK(curves.xi0.cols() == 11);
  CHECK(curves.H.cols() == 1);
  CHECK(curves.v0.scalar() == Approx(0.15).margin(1e-6));
  const auto p = theta.params(store, grid, std::nullopt);
  CHECK_FALSE(p.xi0.is_constant());
  CHECK(p.xi0(0.37) == Approx(0.15).margin(1e-6));
  CHECK(p.rho(0.8) == Approx(-0.7).margin(1e-6));
}

TEST_CASE("non-finite loss aborts with a state dump", "[calibrator]") {
  const auto mg = small_grid();
  const auto o = quick_oracle();
  auto md = synthetic_market(mg, o);
  md.prices(0, 0) = std::numeric_limits<double>::quiet_NaN();
  calib::TrainConfig cfg;
  cfg.steps = 8;
  cfg.batch = 8;
  calib::Calibrator c(md, table_guess, cfg, o);
  CHECK_THROWS_AS(c.run(), NumericalFailure);
  CHECK(c.failure_state().contains("params"));
}
