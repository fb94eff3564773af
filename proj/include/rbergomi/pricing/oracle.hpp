#pragma once

#include <cmath>
#include <string>

#include "rbergomi/market/rate_curve.hpp"
#include "rbergomi/market/surface.hpp"
#include "rbergomi/simulator/msoe.hpp"

namespace rbergomi::pricing {

/// Monte Carlo pricing settings.
struct OracleSettings {
  double step = 1.0 / 200.0;
  int reps = 5000;
  std::uint64_t seed = 20240501;
  sim::SimulationSettings simulation;
  int chunk = 1000;  // paths simulated at a time
  std::string profile = "desk";

  nlohmann::json to_json() const {
    return {{"profile", profile}, {"step", step}, {"reps", reps}, {"seed", seed},
            {"n_exp", simulation.n_exp}, {"soe_tol", simulation.soe_tol}};
  }
};

inline OracleSettings desk_profile() { return {}; }

inline OracleSettings paper_profile() {
  OracleSettings s;
  s.step = 1.0 / 1000.0;
  s.reps = 10000;
  s.profile = "paper";
  return s;
}

inline OracleSettings profile_named(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

/// Discounted mean call payoffs E[exp(-int r)(S_{T_j} - K_l)^+] with standard
/// errors. S = exp(X + int r) with X the simulated discounted log price.
inline market::PriceMatrix mc_price(const sim::ModelParams& params, const market::MarketGrid& mg,
                                    const market::RateCurve& rates, double x0, const OracleSettings& s) {
  mg.validate();
  if (s.reps <= 0) throw ConfigError("mc_price: reps must be positive");
  const auto grid = mg.grid_for_step(s.step);
  const auto k = mg.steps_on(grid);
  const auto curves = sim::ModelCurves::from_params(params, grid);
  const Eigen::Index L = static_cast<Eigen::Index>(mg.L()), N = static_cast<Eigen::Index>(mg.N());
  Matrix sum = Matrix::Zero(L, N), sum2 = Matrix::Zero(L, N);
  std::vector<double> growth(mg.N());
  for (std::size_t j = 0; j < mg.N(); ++j) growth[j] = rates.integral(mg.maturities[j]);

  const int chunk = std::max(1, s.chunk);
  for (int start = 0; start < s.reps; start += chunk) {
    const int paths = std::min(chunk, s.reps - start);
    const auto batch = sim::simulate(curves, grid, paths, s.seed, s.simulation, x0, static_cast<std::uint32_t>(start));
    for (Eigen::Index j = 0; j < N; ++j) {
      const Matrix& X = batch.X[static_cast<std::size_t>(k[static_cast<std::size_t>(j)])].value();
      const double g = growth[static_cast<std::size_t>(j)];
      const double df = std::exp(-g);
      for (Eigen::Index b = 0; b < paths; ++b) {
        const double S = std::exp(X(b, 0) + g);
        for (Eigen::Index l = 0; l < L; ++l) {
          const double v = df * std::max(S - mg.strikes[static_cast<std::size_t>(l)], 0.0);
          sum(l, j) += v;
          sum2(l, j) += v * v;
        }
      }
    }
  }
  market::PriceMatrix out;
  out.grid = mg;
  const double n = s.reps;
  out.values = sum / n;
  const Matrix var = (sum2 / n - out.values.cwiseProduct(out.values)).cwiseMax(0.0) * (n / std::max(n - 1.0, 1.0));
  out.std_errors = (var / n).cwiseSqrt();
  out.settings = s.to_json();
  return out;
}

}  // namespace rbergomi::pricing
