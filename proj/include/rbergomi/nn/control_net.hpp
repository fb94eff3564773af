#pragma once

#include <string>
#include <vector>

#include "rbergomi/nn/layers.hpp"

namespace rbergomi::nn {

struct ControlNetConfig {
  int hidden = 32;
  int layers = 2;
  double slope = 0.3;
  BatchNormConfig bn;
};

/// Feed-forward control surrogate for one time step:
///   bn -> [dense (no bias) -> bn -> leaky_relu] x layers -> dense -> bn.
/// Input is (V_0, V_1, ..., V_i, X_i), i.e. i + 2 features.
class ControlNet {
 public:
  ControlNet() = default;
  ControlNet(std::string prefix, int inputs, int outputs, ControlNetConfig cfg = {})
      : prefix_(std::move(prefix)), inputs_(inputs), outputs_(outputs), cfg_(cfg) {}

  /// Registers parameters with Xavier-uniform weights and zero bias.
  void init(ParameterStore& store, std::uint64_t seed) const {
    auto stream = [&](std::uint32_t k) {
      return numerics::RngStream{seed, static_cast<std::uint32_t>(std::hash<std::string>{}(prefix_)), k,
                                 numerics::StreamDomain::Init};
    };
    add_batchnorm(store, prefix_ + "/bn0", inputs_, stream(0));
    int width = inputs_;
    for (int l = 1; l <= cfg_.layers; ++l) {
      store.add(name("w", l), xavier_uniform(width, cfg_.hidden, stream(2 * l - 1)));
      add_batchnorm(store, prefix_ + "/bn" + std::to_string(l), cfg_.hidden, stream(2 * l));
      width = cfg_.hidden;
    }
    store.add(name("w", cfg_.layers + 1), xavier_uniform(width, outputs_, stream(2 * cfg_.layers + 1)));
    store.add(name("b", cfg_.layers + 1), Matrix::Zero(1, outputs_));
    add_batchnorm(store, prefix_ + "/bn" + std::to_string(cfg_.layers + 1), outputs_, stream(2 * cfg_.layers + 2));
  }

  ad::Var forward(const ParameterStore& store, const Bindings& p, const ad::Var& x, Mode mode,
                  std::vector<BatchNormUpdate>* updates = nullptr) const {
    if (x.cols() != inputs_) throw ShapeError("ControlNet " + prefix_ + ": expected " + std::to_string(inputs_) + " inputs");
    ad::Var h = batchnorm(store, p, prefix_ + "/bn0", x, mode, cfg_.bn, updates);
    for (int l = 1; l <= cfg_.layers; ++l) {
      h = ad::matmul(h, p[name("w", l)]);
      h = batchnorm(store, p, prefix_ + "/bn" + std::to_string(l), h, mode, cfg_.bn, updates);
      h = ad::leaky_relu(h, cfg_.slope);
    }
    h = ad::add(ad::matmul(h, p[name("w", cfg_.layers + 1)]), p[name("b", cfg_.layers + 1)]);
    return batchnorm(store, p, prefix_ + "/bn" + std::to_string(cfg_.layers + 1), h, mode, cfg_.bn, updates);
  }

  /// Closed-form trainable-parameter count.
  static std::size_t parameter_count(int inputs, int outputs, const ControlNetConfig& cfg = {}) {
    std::size_t n = 2 * inputs;  // input batchnorm
    int width = inputs;
    for (int l = 0; l < cfg.layers; ++l) {
      n += static_cast<std::size_t>(width) * cfg.hidden + 2 * cfg.hidden;
      width = cfg.hidden;
    }
    n += static_cast<std::size_t>(width) * outputs + outputs + 2 * outputs;
    return n;
  }

  const std::string& prefix() const { return prefix_; }
  int inputs() const { return inputs_; }
  int outputs() const { return outputs_; }

 private:
  std::string name(const char* kind, int layer) const { return prefix_ + "/" + kind + std::to_string(layer); }

  std::string prefix_;
  int inputs_ = 0;
  int outputs_ = 0;
  ControlNetConfig cfg_;
};

}  // namespace rbergomi::nn
