#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbergomi/autodiff/ops.hpp"
#include "rbergomi/errors.hpp"

namespace rbergomi::nn {

/// Tape variables bound to named parameters for one forward pass.
struct Bindings {
  std::map<std::string, ad::Var> vars;
  const ad::Var& operator[](const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw std::out_of_range("Bindings: unknown parameter " + name);
    return it->second;
  }
};

/// Batch statistics collected during a training-mode forward pass, applied
/// to the running averages afterwards.
struct BatchNormUpdate {
  std::string prefix;  // buffers prefix + "/mean", prefix + "/var"
  Matrix mean;
  Matrix var;
};

/// Named trainable arrays plus non-trainable buffers (batchnorm running
/// statistics). Ordered maps keep iteration and serialization deterministic.
class ParameterStore {
 public:
  void add(const std::string& name, Matrix value) {
    if (params_.count(name)) throw std::invalid_argument("ParameterStore: duplicate parameter " + name);
    params_.emplace(name, std::move(value));
  }
  void add_buffer(const std::string& name, Matrix value) { buffers_[name] = std::move(value); }

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Matrix& at(const std::string& name) { return lookup(params_, name); }
  const Matrix& at(const std::string& name) const { return lookup(params_, name); }
  Matrix& buffer(const std::string& name) { return lookup(buffers_, name); }
  const Matrix& buffer(const std::string& name) const { return lookup(buffers_, name); }

  const std::map<std::string, Matrix>& params() const { return params_; }
  const std::map<std::string, Matrix>& buffers() const { return buffers_; }

  /// Total number of trainable scalars, optionally restricted to a name prefix.
  std::size_t count(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& [k, v] : params_)
      if (k.compare(0, prefix.size(), prefix) == 0) n += static_cast<std::size_t>(v.size());
    return n;
  }

  /// Tracked variables on `tape`, or constants when tape is null.
  Bindings bind(ad::Tape* tape) const {
    Bindings b;
    for (const auto& [k, v] : params_) b.vars.emplace(k, tape ? tape->variable(v) : ad::constant(v));
    return b;
  }

  void apply(const std::vector<BatchNormUpdate>& updates, double momentum) {
    for (const auto& u : updates) {
      Matrix& m = buffer(u.prefix + "/mean");
      Matrix& v = buffer(u.prefix + "/var");
      m = momentum * m + (1.0 - momentum) * u.mean;
      v = momentum * v + (1.0 - momentum) * u.var;
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    auto dump = [](const std::map<std::string, Matrix>& m) {
      nlohmann::json o = nlohmann::json::object();
      for (const auto& [k, v] : m) {
        std::vector<double> data(v.data(), v.data() + v.size());
        o[k] = {{"rows", v.rows()}, {"cols", v.cols()}, {"data", data}};
      }
      return o;
    };
    j["params"] = dump(params_);
    j["buffers"] = dump(buffers_);
    return j;
  }

  static ParameterStore from_json(const nlohmann::json& j) {
    if (!j.contains("version") || j["version"] != 1) throw SchemaError("checkpoint: unsupported version");
    ParameterStore s;
    auto load = [](const nlohmann::json& o, std::map<std::string, Matrix>& m) {
      for (const auto& [k, v] : o.items()) {
        const auto rows = v.at("rows").get<Eigen::Index>(), cols = v.at("cols").get<Eigen::Index>();
        const auto data = v.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw SchemaError("checkpoint: bad size for " + k);
        m.emplace(k, Eigen::Map<const Matrix>(data.data(), rows, cols));
      }
    };
    load(j.at("params"), s.params_);
    if (j.contains("buffers")) load(j.at("buffers"), s.buffers_);
    return s;
  }

 private:
  template <class M>
  static auto lookup(M& m, const std::string& name) -> decltype((m.find(name)->second)) {
    auto it = m.find(name);
    if (it == m.end()) throw std::out_of_range("ParameterStore: unknown name " + name);
    return it->second;
  }

  std::map<std::string, Matrix> params_;
  std::map<std::string, Matrix> buffers_;
};

}  // namespace rbergomi::nn
