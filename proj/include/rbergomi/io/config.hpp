#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbergomi/calibrator/calibrate.hpp"
#include "rbergomi/errors.hpp"
#include "rbergomi/io/csv.hpp"
#include "rbergomi/market/chain.hpp"
#include "rbergomi/pricing/oracle.hpp"

namespace rbergomi::io {

using nlohmann::json;

/// Every key a run may read, with its default.
inline json default_config() {
  return json::parse(R"({
    "grid": {"n": 20, "T": 1.0},
    "market": {
      "strikes": [50, 55, 60, 65, 70, 75, 80, 85, 90],
      "maturities": [0.2, 0.4, 0.6, 0.8, 1.0],
      "spot": 100.0,
      "rate": 0.05,
      "rates_file": null,
      "surface": null,
      "chain": null,
      "v0": null
    },
    "model": {"xi0": 0.09, "H": 0.07, "rho": -0.9, "eta": 1.9, "v0": null},
    "init": {
      "xi0": 0.15, "H": 0.12, "rho": -0.7, "eta": 1.5,
      "mode": {"xi0": "scalar", "H": "scalar", "rho": "scalar", "eta": "scalar"}
    },
    "train": {"lr": 0.01, "batch": 100, "patience": 1, "max_iters": 30, "seed": 1, "optimizer": "adam"},
    "oracle": {"profile": "desk", "steps": null, "reps": null, "seed": 20240501},
    "simulate": {"B": 10, "seed": 1, "n_exp": 0, "soe_tol": 1e-4}
  })");
}

/// Recursive merge; keys absent from the defaults are rejected so typos
/// surface as configuration errors.
inline void merge_into(json& base, const json& patch, const std::string& path = "") {
  if (!patch.is_object()) throw ConfigError("config" + path + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + where.substr(1) + "'");
    if (base[key].is_object() && !base[key].empty() && value.is_object())
      merge_into(base[key], value, where);
    else
      base[key] = value;
  }
}

template <class T>
T get(const json& j, const std::string& dotted) {
  const json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("config: missing key '" + dotted + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: key '" + dotted + "' has the wrong type");
  }
}

inline bool is_null(const json& j, const std::string& a, const std::string& b) { return !j.contains(a) || j[a][b].is_null(); }

/// Applies a `--params` spec such as "xi0=net", "all=net" or "xi0=net,H=scalar".
inline void apply_params_spec(json& cfg, const std::string& spec) {
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--params: expected name=mode, got '" + item + "'");
    const std::string name = trim(item.substr(0, eq)), mode = trim(item.substr(eq + 1));
    if (mode != "net" && mode != "scalar" && mode != "fixed")
      throw ConfigError("--params: mode must be net, scalar or fixed, got '" + mode + "'");
    if (name == "all") {
      for (const auto& p : sim::param_names()) cfg["init"]["mode"][p] = mode;
    } else if (std::find(sim::param_names().begin(), sim::param_names().end(), name) != sim::param_names().end()) {
      cfg["init"]["mode"][name] = mode;
    } else {
      throw ConfigError("--params: unknown parameter '" + name + "'");
    }
  }
}

/// Defaults merged with the user file, then validated.
inline json resolve(const json& user) {
  json cfg = default_config();
  merge_into(cfg, user);
  if (get<int>(cfg, "grid.n") <= 0) throw ConfigError("grid.n must be positive");
  if (!(get<double>(cfg, "grid.T") > 0.0)) throw ConfigError("grid.T must be positive");
  if (!(get<double>(cfg, "market.spot") > 0.0)) throw ConfigError("market.spot must be positive");
  if (get<int>(cfg, "train.batch") < 2) throw ConfigError("train.batch must be at least 2");
  if (!(get<double>(cfg, "train.lr") >= 0.0)) throw ConfigError("train.lr must be nonnegative");
  if (get<int>(cfg, "simulate.B") <= 0) throw ConfigError("simulate.B must be positive");
  for (const auto& p : sim::param_names()) {
    const auto mode = get<std::string>(cfg, "init.mode." + p);
    if (mode != "net" && mode != "scalar" && mode != "fixed") throw ConfigError("init.mode." + p + " must be net, scalar or fixed");
  }
  pricing::profile_named(get<std::string>(cfg, "oracle.profile"));
  return cfg;
}

inline json load_config(const std::string& path) {
  try {
    return resolve(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

/// A parameter given as a number or as {"curve": [[t, v], ...]}.
inline sim::ParamCurve param_curve(const json& v, const std::string& name) {
  if (v.is_number()) return v.get<double>();
  if (v.is_object() && v.contains("curve")) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : v["curve"]) {
      if (!p.is_array() || p.size() != 2) throw ConfigError("model." + name + ".curve: expected [t, value] pairs");
      pts.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    try {
      return sim::ParamCurve::curve(std::move(pts));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("model." + name + ": " + e.what());
    }
  }
  throw ConfigError("model." + name + ": expected a number or {\"curve\": [...]}");
}

inline sim::ModelParams model_params(const json& cfg) {
  sim::ModelParams p;
  const auto& m = cfg["model"];
  p.xi0 = param_curve(m["xi0"], "xi0");
  p.H = param_curve(m["H"], "H");
  p.rho = param_curve(m["rho"], "rho");
  p.eta = param_curve(m["eta"], "eta");
  if (!m["v0"].is_null()) p.v0 = m["v0"].get<double>();
  return p;
}

inline market::MarketGrid market_grid(const json& cfg) {
  market::MarketGrid g{get<std::vector<double>>(cfg, "market.strikes"), get<std::vector<double>>(cfg, "market.maturities")};
  g.validate();
  return g;
}

inline market::RateCurve rate_curve(const json& cfg) {
  if (!cfg["market"]["rates_file"].is_null()) {
    try {
      return market::load_rates(get<std::string>(cfg, "market.rates_file"));
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  return get<double>(cfg, "market.rate");
}

inline pricing::OracleSettings oracle_settings(const json& cfg) {
  auto s = pricing::profile_named(get<std::string>(cfg, "oracle.profile"));
  const auto& o = cfg["oracle"];
  if (!o["steps"].is_null()) {
    const double steps = o["steps"].get<double>();
    if (!(steps > 0)) throw ConfigError("oracle.steps must be positive");
    s.step = 1.0 / steps;
  }
  if (!o["reps"].is_null()) s.reps = o["reps"].get<int>();
  if (s.reps <= 0) throw ConfigError("oracle.reps must be positive");
  s.seed = get<std::uint64_t>(cfg, "oracle.seed");
  s.simulation.soe_tol = get<double>(cfg, "simulate.soe_tol");
  return s;
}

inline sim::SimulationSettings simulation_settings(const json& cfg) {
  return {get<int>(cfg, "simulate.n_exp"), get<double>(cfg, "simulate.soe_tol")};
}

inline calib::TrainConfig train_config(const json& cfg) {
  calib::TrainConfig t;
  t.steps = get<int>(cfg, "grid.n");
  t.lr = get<double>(cfg, "train.lr");
  t.batch = get<int>(cfg, "train.batch");
  t.patience = get<int>(cfg, "train.patience");
  t.max_iters = get<int>(cfg, "train.max_iters");
  t.seed = get<std::uint64_t>(cfg, "train.seed");
  const auto opt = get<std::string>(cfg, "train.optimizer");
  if (opt == "sgd")
    t.optimizer.kind = nn::OptimizerKind::Sgd;
  else if (opt != "adam")
    throw ConfigError("train.optimizer must be adam or sgd");
  t.simulation = simulation_settings(cfg);
  return t;
}

inline std::array<calib::ParamInit, 4> param_init(const json& cfg) {
  std::array<calib::ParamInit, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& name = sim::param_names()[k];
    out[k].guess = get<double>(cfg, "init." + name);
    out[k].net = get<std::string>(cfg, "init.mode." + name) == "net";
    out[k].fixed = get<std::string>(cfg, "init.mode." + name) == "fixed";
    const auto range = sim::range_for(name);
    if (!(out[k].guess > range.lower && out[k].guess < range.upper))
      throw ConfigError("init." + name + " = " + format_double(out[k].guess) + " is outside its valid range");
  }
  return out;
}

}  // namespace rbergomi::io
