#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "catch_amalgamated.hpp"
#include "cli_commands.hpp"

using namespace rbergomi;
using Catch::Approx;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("rbergomi_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, const json& cfg) {
  const auto path = (dir / "config_in.json").string();
  io::write_file(path, cfg.dump(2));
  return path;
}

struct Outcome {
  int code;
  std::string log, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "rbergomi_cli");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream log, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), log, err);
  return {code, log.str(), err.str()};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

json small_calibration() {
  return {{"grid", {{"n", 8}, {"T", 0.4}}},
          {"market", {{"strikes", {80, 90, 100}}, {"maturities", {0.2, 0.4}}}},
          {"train", {{"batch", 16}, {"max_iters", 3}, {"patience", 0}}},
          {"oracle", {{"reps", 200}, {"steps", 20}}}};
}

}  // namespace

TEST_CASE("simulate writes one row per path and step", "[cli]") {
  const auto dir = scratch("simulate");
  const auto cfg = write_config(dir, {{"simulate", {{"B", 10}}}, {"grid", {{"n", 20}, {"T", 1.0}}}});
  const auto a = invoke({"simulate", "--config", cfg, "--out", (dir / "a").string()});
  REQUIRE(a.code == 0);
  const auto rows = read_csv(dir / "a" / "paths.csv");
  REQUIRE(rows.size() == 201);
  CHECK(rows[0] == std::vector<std::string>{"path", "i", "t", "X", "V", "dW", "dWp"});
  std::set<std::string> ids;
  for (std::size_t r = 1; r < rows.size(); ++r) ids.insert(rows[r][0]);
  CHECK(ids.size() == 10);
  CHECK(fs::exists(dir / "a" / "config.json"));

  REQUIRE(invoke({"simulate", "--config", cfg, "--out", (dir / "b").string()}).code == 0);
  CHECK(io::read_file((dir / "a" / "paths.csv").string()) == io::read_file((dir / "b" / "paths.csv").string()));
  REQUIRE(invoke({"simulate", "--config", cfg, "--seed", "7", "--out", (dir / "c").string()}).code == 0);
  CHECK(io::read_file((dir / "a" / "paths.csv").string()) != io::read_file((dir / "c" / "paths.csv").string()));
}

TEST_CASE("simulate with zero vol-of-vol gives a flat variance", "[cli]") {
  const auto dir = scratch("flat");
  const auto cfg = write_config(dir, {{"model", {{"eta", 0.0}, {"xi0", 0.04}}}, {"grid", {{"n", 10}, {"T", 1.0}}}});
  REQUIRE(invoke({"simulate", "--config", cfg, "--out", dir.string()}).code == 0);
  const auto rows = read_csv(dir / "paths.csv");
  for (std::size_t r = 1; r < rows.size(); ++r) CHECK(std::stod(rows[r][4]) == Approx(0.04).epsilon(1e-14));
}

TEST_CASE("price writes prices with a settings sidecar", "[cli]") {
  const auto dir = scratch("price");
  const auto cfg = write_config(dir, {{"market", {{"strikes", {0.0, 100.0}}, {"maturities", {0.5, 1.0}}}},
                                      {"oracle", {{"reps", 2000}, {"steps", 50}}}});
  REQUIRE(invoke({"price", "--config", cfg, "--out", dir.string()}).code == 0);
  const auto pm = market::PriceMatrix::read((dir / "prices.csv").string());
  const auto side = json::parse(io::read_file((dir / "prices.settings.json").string()));
  for (int j = 0; j < 2; ++j) CHECK(std::abs(pm.values(0, j) - 100.0) <= 3.0 * side["std_errors"][0][j].get<double>());
  CHECK(side["reps"] == 2000);
  CHECK(side["seed"] == 20240501);
  CHECK(side.contains("std_errors"));
  CHECK(side["model"]["H"] == 0.07);
}

TEST_CASE("gen-synthetic records the generating parameters", "[cli]") {
  const auto dir = scratch("synthetic");
  const auto cfg = write_config(dir, {{"oracle", {{"reps", 300}, {"steps", 20}}}});
  REQUIRE(invoke({"gen-synthetic", "--config", cfg, "--out", dir.string()}).code == 0);
  const auto theta = json::parse(io::read_file((dir / "theta.json").string()));
  CHECK(theta["model"]["xi0"] == 0.09);
  CHECK(theta["model"]["rho"] == -0.9);
  CHECK(theta["oracle"]["reps"] == 300);
  const auto pm = market::PriceMatrix::read((dir / "surface.csv").string());
  CHECK(pm.grid.L() == 9);
  CHECK(pm.grid.N() == 5);
}

TEST_CASE("calibrate writes a consistent run directory", "[cli]") {
  const auto dir = scratch("calibrate");
  const auto cfg = write_config(dir, small_calibration());
  const auto run = invoke({"calibrate", "--config", cfg, "--out", dir.string()});
  REQUIRE(run.code == 0);
  for (const char* f : {"trajectory.csv", "curves.csv", "checkpoint.json", "surface.csv", "report.json", "config.json"})
    CHECK(fs::exists(dir / f));
  const auto traj = read_csv(dir / "trajectory.csv");
  REQUIRE(traj.size() == 5);
  CHECK(traj[0] == std::vector<std::string>{"iteration", "loss", "F", "avg_rel", "max_rel", "xi0", "H", "rho", "eta"});
  const auto report = json::parse(io::read_file((dir / "report.json").string()));
  const int best = report["best_iteration"];
  const auto& row = traj[static_cast<std::size_t>(best) + 1];
  CHECK(report["F"].get<double>() == Approx(std::stod(row[2])).epsilon(1e-12));
  CHECK(report["avg_rel"].get<double>() == Approx(std::stod(row[3])).epsilon(1e-12));
  CHECK(report["max_rel"].get<double>() == Approx(std::stod(row[4])).epsilon(1e-12));
  CHECK(report["theta_at_t0"]["xi0"].get<double>() == Approx(std::stod(row[5])).epsilon(1e-12));
  CHECK(report["iterations"] == 3);
  CHECK(report["stop_reason"] == "max_iters");
  CHECK(report["control_parameters"] == calib::ControlNets::parameter_count(market::MarketGrid{{80, 90, 100}, {0.2, 0.4}},
                                                                            numerics::TimeGrid(8, 0.4)));
  const auto curves = read_csv(dir / "curves.csv");
  CHECK(curves.size() == 10);
  CHECK(std::stod(curves[1][1]) == Approx(std::stod(row[5])).epsilon(1e-12));

  const auto summary = invoke({"report", dir.string()});
  REQUIRE(summary.code == 0);
  CHECK(summary.log.find("F: " + row[2]) != std::string::npos);
  CHECK(summary.log.find("best iteration: " + std::to_string(best)) != std::string::npos);

  const auto again = scratch("calibrate_again");
  REQUIRE(invoke({"calibrate", "--config", cfg, "--out", again.string()}).code == 0);
  CHECK(io::read_file((dir / "trajectory.csv").string()) == io::read_file((again / "trajectory.csv").string()));
}

TEST_CASE("parameter modes switch to time-dependent nets", "[cli]") {
  const auto dir = scratch("modes");
  auto c = small_calibration();
  c["train"]["max_iters"] = 1;
  const auto cfg = write_config(dir, c);
  REQUIRE(invoke({"calibrate", "--config", cfg, "--params", "xi0=net", "--out", (dir / "one").string()}).code == 0);
  auto report = json::parse(io::read_file((dir / "one" / "report.json").string()));
  CHECK(report["modes"]["xi0"] == "net");
  CHECK(report["modes"]["H"] == "scalar");
  const auto store = nn::ParameterStore::from_json(json::parse(io::read_file((dir / "one" / "checkpoint.json").string())));
  CHECK(store.contains("theta/xi0/w1"));
  CHECK_FALSE(store.contains("theta/H/w1"));

  REQUIRE(invoke({"calibrate", "--config", cfg, "--params", "all=net", "--out", (dir / "all").string()}).code == 0);
  report = json::parse(io::read_file((dir / "all" / "report.json").string()));
  for (const char* p : {"xi0", "H", "rho", "eta"}) CHECK(report["modes"][p] == "net");
  CHECK(invoke({"calibrate", "--config", cfg, "--params", "gamma=net", "--out", (dir / "bad").string()}).code == 2);

  REQUIRE(invoke({"calibrate", "--config", cfg, "--params", "H=fixed,rho=fixed", "--out", (dir / "fixed").string()}).code == 0);
  report = json::parse(io::read_file((dir / "fixed" / "report.json").string()));
  CHECK(report["modes"]["H"] == "fixed");
  const auto traj = read_csv(dir / "fixed" / "trajectory.csv");
  CHECK(std::stod(traj[2][6]) == Approx(0.12).epsilon(1e-12));
  CHECK(std::stod(traj[2][7]) == Approx(-0.7).epsilon(1e-12));
  CHECK(std::stod(traj[2][5]) != Approx(0.15).epsilon(1e-6));
}

TEST_CASE("exit codes for configuration and numerical failures", "[cli]") {
  const auto dir = scratch("errors");
  CHECK(invoke({"simulate", "--config", (dir / "missing.json").string()}).code == 2);
  CHECK(invoke({"report", (dir / "no_such_run").string()}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  const auto typo = write_config(dir, {{"grid", {{"nn", 4}}}});
  const auto t = invoke({"simulate", "--config", typo, "--out", (dir / "t").string()});
  CHECK(t.code == 2);
  CHECK(t.err.find("grid.nn") != std::string::npos);
  CHECK(invoke({"price", "--config", typo, "--profile", "lab", "--out", (dir / "p").string()}).code == 2);

  io::write_file((dir / "nan.csv").string(), "strike,0.5\n100,nan\n");
  const auto nan_cfg = write_config(dir, {{"grid", {{"n", 4}, {"T", 0.5}}},
                                          {"market", {{"surface", (dir / "nan.csv").string()}}},
                                          {"train", {{"batch", 8}, {"max_iters", 2}}},
                                          {"oracle", {{"reps", 50}}}});
  CHECK(invoke({"calibrate", "--config", nan_cfg, "--out", (dir / "n").string()}).code == 3);
  CHECK(fs::exists(dir / "n" / "failure_state.json"));

  const auto horizon = write_config(dir, {{"grid", {{"n", 4}, {"T", 0.7}}}, {"market", {{"maturities", {0.5}}}}});
  CHECK(invoke({"calibrate", "--config", horizon, "--out", (dir / "h").string()}).code == 2);
}
