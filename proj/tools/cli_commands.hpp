#pragma once

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rbergomi/rbergomi.hpp"

namespace rbergomi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode { Ok = 0, ConfigFailure = 2, NumericFailure = 3 };

struct Options {
  std::string command;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::string> profile;
  std::optional<std::string> params;
  std::string run_dir;
};

/// Config file (or defaults) with flag overrides applied.
inline json resolved_config(const Options& o) {
  json user = json::object();
  if (!o.config.empty()) {
    try {
      user = json::parse(io::read_file(o.config));
    } catch (const json::parse_error& e) {
      throw ConfigError(o.config + ": " + e.what());
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  json cfg = io::resolve(user);
  if (o.profile) {
    pricing::profile_named(*o.profile);
    cfg["oracle"]["profile"] = *o.profile;
  }
  if (o.params) io::apply_params_spec(cfg, *o.params);
  if (o.seed) {
    if (o.command == "simulate") cfg["simulate"]["seed"] = *o.seed;
    else if (o.command == "calibrate") cfg["train"]["seed"] = *o.seed;
    else cfg["oracle"]["seed"] = *o.seed;
  }
  return io::resolve(cfg);
}

inline void prepare_out(const std::string& dir, const json& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
  io::write_file((fs::path(dir) / "config.json").string(), cfg.dump(2) + "\n");
}

inline double x0_of(const json& cfg) { return std::log(io::get<double>(cfg, "market.spot")); }

inline int cmd_simulate(const json& cfg, const std::string& out, std::ostream& log) {
  const numerics::TimeGrid grid(io::get<int>(cfg, "grid.n"), io::get<double>(cfg, "grid.T"));
  const auto batch = sim::simulate(io::model_params(cfg), grid, io::get<int>(cfg, "simulate.B"),
                                   io::get<std::uint64_t>(cfg, "simulate.seed"), io::simulation_settings(cfg), x0_of(cfg));
  prepare_out(out, cfg);
  std::ostringstream os;
  sim::write_path_dump(os, batch);
  const auto path = (fs::path(out) / "paths.csv").string();
  io::write_file(path, os.str());
  log << "wrote " << path << " (" << batch.paths << " paths, " << grid.steps() << " steps, n_exp " << batch.n_exp << ")\n";
  return Ok;
}

inline market::PriceMatrix price_from_config(const json& cfg) {
  const auto params = io::model_params(cfg);
  auto pm = pricing::mc_price(params, io::market_grid(cfg), io::rate_curve(cfg), x0_of(cfg), io::oracle_settings(cfg));
  pm.settings["model"] = cfg["model"];
  return pm;
}

inline int cmd_price(const json& cfg, const std::string& out, std::ostream& log) {
  const auto pm = price_from_config(cfg);
  prepare_out(out, cfg);
  const auto path = (fs::path(out) / "prices.csv").string();
  pm.write(path);
  log << "wrote " << path << "\n";
  return Ok;
}

inline int cmd_gen_synthetic(const json& cfg, const std::string& out, std::ostream& log) {
  const auto pm = price_from_config(cfg);
  prepare_out(out, cfg);
  const auto path = (fs::path(out) / "surface.csv").string();
  pm.write(path);
  json theta = {{"model", cfg["model"]}, {"oracle", pm.settings}, {"spot", cfg["market"]["spot"]}};
  theta["oracle"].erase("model");
  io::write_file((fs::path(out) / "theta.json").string(), theta.dump(2) + "\n");
  log << "wrote " << path << " and theta.json\n";
  return Ok;
}

/// Market data for calibration: a chain file, a surface file, or a surface
/// generated from the model section with the configured oracle.
inline calib::MarketData market_from_config(const json& cfg, std::ostream& log) {
  calib::MarketData md;
  md.rates = io::rate_curve(cfg);
  md.x0 = x0_of(cfg);
  md.grid = io::market_grid(cfg);
  const auto& m = cfg["market"];
  if (!m["chain"].is_null()) {
    market::ChainLoad chain;
    try {
      chain = market::load_chain(m["chain"].get<std::string>());
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
    for (const auto& w : chain.warnings) log << "warning: " << w << "\n";
    if (chain.records.empty()) throw ConfigError("market.chain: no usable records");
    md.x0 = std::log(chain.records.front().underlying_close);
    const auto built = market::build_surface(chain.records, md.grid);
    for (const auto& w : built.warnings) log << "warning: " << w << "\n";
    md.prices = built.surface.values;
    md.quoted = built.quoted;
    if (m["v0"].is_string()) {
      if (m["v0"] != "proxy") throw ConfigError("market.v0 must be a number, null or \"proxy\"");
      const auto proxy = market::spot_variance_proxy(chain.records, md.rates(0.0));
      for (const auto& w : proxy.warnings) log << "warning: " << w << "\n";
      md.v0 = proxy.v0;
    }
  } else if (!m["surface"].is_null()) {
    market::PriceMatrix pm;
    try {
      pm = market::PriceMatrix::read(m["surface"].get<std::string>());
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
    md.grid = pm.grid;
    md.prices = pm.values;
  } else {
    md.prices = price_from_config(cfg).values;
  }
  if (m["v0"].is_number()) md.v0 = m["v0"].get<double>();
  else if (m["v0"].is_string() && m["chain"].is_null()) throw ConfigError("market.v0 = \"proxy\" requires market.chain");
  return md;
}

inline std::string trajectory_csv(const calib::CalibrationResult& r) {
  std::ostringstream os;
  os << "iteration,loss,F,avg_rel,max_rel,xi0,H,rho,eta\n";
  for (const auto& t : r.trajectory) {
    os << t.iteration << ',' << io::format_double(t.loss) << ',' << io::format_double(t.F) << ',' << io::format_double(t.avg_rel)
       << ',' << io::format_double(t.max_rel);
    for (const auto& p : sim::param_names()) os << ',' << io::format_double(t.theta.at(p));
    os << '\n';
  }
  return os.str();
}

inline std::string curves_csv(const std::vector<std::array<double, 5>>& rows) {
  std::ostringstream os;
  os << "t,xi0,H,rho,eta\n";
  for (const auto& r : rows) {
    os << io::format_double(r[0]);
    for (std::size_t k = 1; k < 5; ++k) os << ',' << io::format_double(r[k]);
    os << '\n';
  }
  return os.str();
}

inline int cmd_calibrate(const json& cfg, const std::string& out, std::ostream& log) {
  const auto md = market_from_config(cfg, log);
  if (std::abs(io::get<double>(cfg, "grid.T") - md.grid.horizon()) > 1e-12)
    throw ConfigError("grid.T must equal the last maturity " + io::format_double(md.grid.horizon()));
  calib::Calibrator c(md, io::param_init(cfg), io::train_config(cfg), io::oracle_settings(cfg));
  prepare_out(out, cfg);
  calib::CalibrationResult res;
  try {
    res = c.run([&](const calib::IterationRecord& r) {
      log << "iter " << r.iteration << "  loss " << io::format_double(r.loss) << "  F " << io::format_double(r.F) << "  avg_rel "
          << io::format_double(r.avg_rel) << "  max_rel " << io::format_double(r.max_rel) << "\n";
    });
  } catch (const NumericalFailure&) {
    io::write_file((fs::path(out) / "failure_state.json").string(), c.failure_state().dump() + "\n");
    throw;
  }
  const auto curves = c.curve_table(res.best_store);
  io::write_file((fs::path(out) / "trajectory.csv").string(), trajectory_csv(res));
  io::write_file((fs::path(out) / "curves.csv").string(), curves_csv(curves));
  io::write_file((fs::path(out) / "checkpoint.json").string(), res.best_store.to_json().dump() + "\n");
  market::PriceMatrix used{md.grid, md.prices, Matrix(), {{"source", "calibration input"}}};
  io::write_file((fs::path(out) / "surface.csv").string(), used.to_csv());

  json theta = json::object();
  for (const auto& [k, v] : c.theta().at_zero(res.best_store)) theta[k] = v;
  json report = {{"best_iteration", res.best_iteration},
                 {"F", res.best.F},
                 {"avg_rel", res.best.avg_rel},
                 {"max_rel", res.best.max_rel},
                 {"zero_price_flag", res.best.zero_price},
                 {"iterations", static_cast<int>(res.trajectory.size()) - 1},
                 {"stop_reason", res.stop_reason},
                 {"theta_at_t0", theta},
                 {"modes", cfg["init"]["mode"]},
                 {"oracle", c.target().settings().to_json()},
                 {"control_parameters", calib::ControlNets::parameter_count(md.grid, c.grid())},
                 {"runtime_seconds", res.seconds}};
  if (md.v0) report["v0"] = *md.v0;
  io::write_file((fs::path(out) / "report.json").string(), report.dump(2) + "\n");
  log << "best iteration " << res.best_iteration << "  F " << io::format_double(res.best.F) << "  avg_rel "
      << io::format_double(res.best.avg_rel) << "  max_rel " << io::format_double(res.best.max_rel) << "\n";
  return Ok;
}

inline int cmd_report(const std::string& dir, std::ostream& log) {
  const fs::path base(dir);
  if (!fs::is_directory(base)) throw ConfigError("report: run directory '" + dir + "' does not exist");
  json report;
  try {
    report = json::parse(io::read_file((base / "report.json").string()));
  } catch (const ParseError& e) {
    throw ConfigError(std::string("report: ") + e.what());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("report: ") + e.what());
  }
  log << "run: " << dir << "\n";
  log << "best iteration: " << report["best_iteration"].get<int>() << " of " << report["iterations"].get<int>() << " ("
      << report["stop_reason"].get<std::string>() << ")\n";
  log << "F: " << io::format_double(report["F"].get<double>()) << "\n";
  log << "average relative error: " << io::format_double(report["avg_rel"].get<double>()) << "\n";
  log << "maximum relative error: " << io::format_double(report["max_rel"].get<double>()) << "\n";
  for (const auto& p : sim::param_names())
    log << p << "(0): " << io::format_double(report["theta_at_t0"][p].get<double>()) << " [" << report["modes"][p].get<std::string>()
        << "]\n";
  return Ok;
}

/// Parses arguments and runs one subcommand. Errors are reported on `err`
/// and mapped to exit codes.
inline int run(int argc, char** argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"rough Bergomi simulation, pricing and calibration"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed override");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--profile", o.profile, "Oracle profile: desk or paper");
    sub->add_option("--params", o.params, "Parameter modes, e.g. xi0=net or all=net");
  };
  for (const char* name : {"simulate", "price", "gen-synthetic", "calibrate"})
    add_common(app.add_subcommand(name, std::string("Run ") + name));
  auto* report = app.add_subcommand("report", "Summarize a calibration run directory");
  report->add_option("dir", o.run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log, err);
    return code == 0 ? Ok : ConfigFailure;
  }
  o.command = app.get_subcommands().front()->get_name();
  if (o.command != "report" && app.get_subcommands().front()->count("--seed")) o.seed = seed;

  try {
    if (o.command == "report") return cmd_report(o.run_dir, log);
    const json cfg = resolved_config(o);
    if (o.command == "simulate") return cmd_simulate(cfg, o.out, log);
    if (o.command == "price") return cmd_price(cfg, o.out, log);
    if (o.command == "gen-synthetic") return cmd_gen_synthetic(cfg, o.out, log);
    return cmd_calibrate(cfg, o.out, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return ConfigFailure;
  } catch (const SchemaError& e) {
    err << "config error: " << e.what() << "\n";
    return ConfigFailure;
  } catch (const MissingStrike& e) {
    err << "config error: " << e.what() << "\n";
    return ConfigFailure;
  } catch (const ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return ConfigFailure;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return NumericFailure;
  } catch (const NotPSD& e) {
    err << "numerical failure: " << e.what() << "\n";
    return NumericFailure;
  } catch (const ToleranceUnreachable& e) {
    err << "numerical failure: " << e.what() << "\n";
    return NumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return ConfigFailure;
  }
}

}  // namespace rbergomi::cli
