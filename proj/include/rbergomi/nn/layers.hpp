#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rbergomi/autodiff/ops.hpp"
#include "rbergomi/nn/parameter_store.hpp"
#include "rbergomi/numerics/rng.hpp"

namespace rbergomi::nn {

/// Xavier (Glorot) uniform weights U(-a, a), a = sqrt(6 / (fan_in + fan_out)),
/// stored fan_in x fan_out so that y = x W.
inline Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, const numerics::RngStream& stream) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = a * (2.0 * stream.uniform(static_cast<std::uint32_t>(k)) - 1.0);
  return w;
}

enum class Mode { Train, Infer };

struct BatchNormConfig {
  double momentum = 0.99;
  double eps = 1e-6;
};

/// Registers gamma ~ U(0.1, 0.5), beta ~ N(0, 0.1) and running statistics
/// (mean 0, var 1) under `prefix`.
inline void add_batchnorm(ParameterStore& store, const std::string& prefix, Eigen::Index features,
                          const numerics::RngStream& stream) {
  Matrix gamma(1, features), beta(1, features);
  for (Eigen::Index k = 0; k < features; ++k) {
    gamma(0, k) = 0.1 + 0.4 * stream.uniform(static_cast<std::uint32_t>(k));
    beta(0, k) = 0.1 * stream.normal(static_cast<std::uint32_t>(k));
  }
  store.add(prefix + "/gamma", gamma);
  store.add(prefix + "/beta", beta);
  store.add_buffer(prefix + "/mean", Matrix::Zero(1, features));
  store.add_buffer(prefix + "/var", Matrix::Ones(1, features));
}

inline ad::Var batchnorm(const ParameterStore& store, const Bindings& p, const std::string& prefix, const ad::Var& x,
                         Mode mode, const BatchNormConfig& cfg, std::vector<BatchNormUpdate>* updates) {
  if (mode == Mode::Train) {
    auto out = ad::batchnorm_train(x, p[prefix + "/gamma"], p[prefix + "/beta"], cfg.eps);
    if (updates) updates->push_back({prefix, std::move(out.batch_mean), std::move(out.batch_var)});
    return out.y;
  }
  return ad::batchnorm_infer(x, p[prefix + "/gamma"], p[prefix + "/beta"], store.buffer(prefix + "/mean"),
                             store.buffer(prefix + "/var"), cfg.eps);
}

}  // namespace rbergomi::nn
