#pragma once

#include <string>

#include "rbergomi/nn/layers.hpp"
#include "rbergomi/simulator/params.hpp"

namespace rbergomi::nn {

struct ParamNetConfig {
  int hidden = 8;
  int layers = 2;
  double slope = 0.2;
  double init_scale = 1e-4;
};

/// Time-dependent model parameter t -> range(u(t)) with u a small fully
/// connected net. Weights and biases start at init_scale and the output bias
/// at range.inverse(guess), so the initial curve is flat at the guess.
class ParamNet {
 public:
  ParamNet() = default;
  ParamNet(std::string prefix, sim::RangeMap range, ParamNetConfig cfg = {})
      : prefix_(std::move(prefix)), range_(range), cfg_(cfg) {}

  void init(ParameterStore& store, double guess) const {
    int width = 1;
    for (int l = 1; l <= cfg_.layers; ++l) {
      store.add(name("w", l), Matrix::Constant(width, cfg_.hidden, cfg_.init_scale));
      store.add(name("b", l), Matrix::Constant(1, cfg_.hidden, cfg_.init_scale));
      width = cfg_.hidden;
    }
    store.add(name("w", cfg_.layers + 1), Matrix::Constant(width, 1, cfg_.init_scale));
    store.add(name("b", cfg_.layers + 1), Matrix::Constant(1, 1, range_.inverse(guess)));
  }

  /// t is a column of times (rows x 1); returns the mapped parameter values.
  ad::Var forward(const Bindings& p, const ad::Var& t) const {
    if (t.cols() != 1) throw ShapeError("ParamNet " + prefix_ + ": input must be a column of times");
    ad::Var h = t;
    for (int l = 1; l <= cfg_.layers; ++l)
      h = ad::leaky_relu(ad::add(ad::matmul(h, p[name("w", l)]), p[name("b", l)]), cfg_.slope);
    const ad::Var u = ad::add(ad::matmul(h, p[name("w", cfg_.layers + 1)]), p[name("b", cfg_.layers + 1)]);
    return range_(u);
  }

  /// Untracked evaluation at times t.
  std::vector<double> evaluate(const ParameterStore& store, const std::vector<double>& t) const {
    Matrix tm(static_cast<Eigen::Index>(t.size()), 1);
    for (std::size_t k = 0; k < t.size(); ++k) tm(static_cast<Eigen::Index>(k), 0) = t[k];
    const Matrix out = forward(store.bind(nullptr), ad::constant(tm)).value();
    return {out.data(), out.data() + out.size()};
  }

  static std::size_t parameter_count(const ParamNetConfig& cfg = {}) {
    std::size_t n = 0;
    int width = 1;
    for (int l = 0; l < cfg.layers; ++l) {
      n += static_cast<std::size_t>(width) * cfg.hidden + cfg.hidden;
      width = cfg.hidden;
    }
    return n + width + 1;
  }

  const std::string& prefix() const { return prefix_; }
  const sim::RangeMap& range() const { return range_; }

 private:
  std::string name(const char* kind, int layer) const { return prefix_ + "/" + kind + std::to_string(layer); }

  std::string prefix_;
  sim::RangeMap range_;
  ParamNetConfig cfg_;
};

}  // namespace rbergomi::nn
