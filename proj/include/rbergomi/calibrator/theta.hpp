#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbergomi/nn/param_net.hpp"
#include "rbergomi/simulator/msoe.hpp"

namespace rbergomi::calib {

/// Initial value of one model parameter and whether it is learned as a
/// constant, learned as a function of time, or held fixed at the guess.
struct ParamInit {
  double guess = 0.0;
  bool net = false;
  bool fixed = false;
};

/// Model parameters theta = (xi0, H, rho, eta) as trainable entries of a
/// ParameterStore: a scalar "theta/<name>" mapped through its RangeMap, or a
/// ParamNet under the same prefix.
class Theta {
 public:
  Theta() = default;
  Theta(std::array<ParamInit, 4> init, nn::ParamNetConfig net_cfg = {}) : init_(init), net_cfg_(net_cfg) {
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& name = sim::param_names()[k];
      nets_[k] = nn::ParamNet(prefix(k), sim::range_for(name), net_cfg_);
    }
  }

  static std::string prefix(std::size_t k) { return "theta/" + sim::param_names()[k]; }
  const std::array<ParamInit, 4>& init() const { return init_; }
  bool is_net(std::size_t k) const { return init_[k].net; }
  bool is_fixed(std::size_t k) const { return init_[k].fixed && !init_[k].net; }

  void add_to(nn::ParameterStore& store) const {
    for (std::size_t k = 0; k < 4; ++k) {
      if (init_[k].net)
        nets_[k].init(store, init_[k].guess);
      else
        store.add(prefix(k), Matrix::Constant(1, 1, sim::range_for(sim::param_names()[k]).inverse(init_[k].guess)));
    }
  }

  /// Parameter values on `grid` as tape values (1x1 or 1x(n+1)).
  sim::ModelCurves curves(const nn::Bindings& p, const numerics::TimeGrid& grid, std::optional<double> v0) const {
    std::array<ad::Var, 4> c;
    for (std::size_t k = 0; k < 4; ++k) {
      if (init_[k].net) {
        Matrix t(grid.steps() + 1, 1);
        for (int i = 0; i <= grid.steps(); ++i) t(i, 0) = grid.time(i);
        c[k] = ad::transpose(nets_[k].forward(p, ad::constant(t)));
      } else {
        c[k] = sim::range_for(sim::param_names()[k])(p[prefix(k)]);
      }
    }
    const ad::Var spot = v0 ? ad::constant(*v0) : sim::ModelCurves::at(c[0], 0);
    return {c[0], c[1], c[2], c[3], spot};
  }

  /// Untracked values sampled at `times`, one vector per parameter.
  std::array<std::vector<double>, 4> sample(const nn::ParameterStore& store, const std::vector<double>& times) const {
    std::array<std::vector<double>, 4> out;
    for (std::size_t k = 0; k < 4; ++k) {
      if (init_[k].net) {
        out[k] = nets_[k].evaluate(store, times);
      } else {
        const double v = sim::range_for(sim::param_names()[k])(store.at(prefix(k))(0, 0));
        out[k].assign(times.size(), v);
      }
    }
    return out;
  }

  /// ModelParams for pricing on `grid`; net parameters become piecewise-linear
  /// curves through their values at the grid times.
  sim::ModelParams params(const nn::ParameterStore& store, const numerics::TimeGrid& grid, std::optional<double> v0) const {
    std::vector<double> times(static_cast<std::size_t>(grid.steps()) + 1);
    for (int i = 0; i <= grid.steps(); ++i) times[static_cast<std::size_t>(i)] = grid.time(i);
    const auto s = sample(store, times);
    std::array<sim::ParamCurve, 4> c;
    for (std::size_t k = 0; k < 4; ++k) {
      if (!init_[k].net) {
        c[k] = s[k].front();
        continue;
      }
      std::vector<std::pair<double, double>> pts;
      for (std::size_t i = 0; i < times.size(); ++i) pts.emplace_back(times[i], s[k][i]);
      c[k] = pts.size() >= 2 ? sim::ParamCurve::curve(std::move(pts)) : sim::ParamCurve(s[k].front());
    }
    sim::ModelParams p{c[0], c[1], c[2], c[3], v0};
    return p;
  }

  /// Values at t = 0, keyed by parameter name.
  std::map<std::string, double> at_zero(const nn::ParameterStore& store) const {
    const auto s = sample(store, {0.0});
    std::map<std::string, double> out;
    for (std::size_t k = 0; k < 4; ++k) out[sim::param_names()[k]] = s[k].front();
    return out;
  }

 private:
  std::array<ParamInit, 4> init_{};
  nn::ParamNetConfig net_cfg_;
  std::array<nn::ParamNet, 4> nets_;
};

}  // namespace rbergomi::calib
