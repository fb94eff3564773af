#pragma once

#include <cmath>
#include <map>
#include <string>

#include "rbergomi/autodiff/tape.hpp"
#include "rbergomi/nn/parameter_store.hpp"

namespace rbergomi::nn {

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction, or plain gradient descent. Moments are keyed by
/// parameter name and created lazily with the parameter's shape.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update with learning rate lr to the parameters whose names
  /// appear in grads.
  void step(ParameterStore& store, const std::map<std::string, Matrix>& grads, double lr) {
    ++t_;
    for (const auto& [name, g] : grads) {
      Matrix& x = store.at(name);
      if (g.rows() != x.rows() || g.cols() != x.cols()) throw ShapeError("Optimizer: gradient shape mismatch for " + name);
      if (cfg_.kind == OptimizerKind::Sgd) {
        x -= lr * g;
        continue;
      }
      auto [it, fresh] = moments_.try_emplace(name);
      Moments& m = it->second;
      if (fresh) {
        m.first = Matrix::Zero(x.rows(), x.cols());
        m.second = Matrix::Zero(x.rows(), x.cols());
      }
      m.first = cfg_.beta1 * m.first + (1.0 - cfg_.beta1) * g;
      m.second = cfg_.beta2 * m.second + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      x.array() -= lr * (m.first.array() / c1) / ((m.second.array() / c2).sqrt() + cfg_.eps);
    }
  }

  /// Collects gradients for every parameter bound in `vars`.
  static std::map<std::string, Matrix> gradients(const Bindings& vars, const ad::Gradients& g) {
    std::map<std::string, Matrix> out;
    for (const auto& [name, v] : vars.vars) out.emplace(name, g.wrt(v));
    return out;
  }

  long steps() const { return t_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  struct Moments {
    Matrix first, second;
  };
  OptimizerConfig cfg_;
  std::map<std::string, Moments> moments_;
  long t_ = 0;
};

}  // namespace rbergomi::nn
