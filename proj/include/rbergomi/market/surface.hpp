#pragma once

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbergomi/errors.hpp"
#include "rbergomi/io/csv.hpp"
#include "rbergomi/numerics/linalg.hpp"
#include "rbergomi/numerics/time_grid.hpp"

namespace rbergomi::market {

/// Strikes K_1..K_L and ascending maturities T_1..T_N.
struct MarketGrid {
  std::vector<double> strikes;
  std::vector<double> maturities;

  std::size_t L() const { return strikes.size(); }
  std::size_t N() const { return maturities.size(); }
  double horizon() const { return maturities.back(); }

  void validate() const {
    if (strikes.empty() || maturities.empty()) throw ConfigError("MarketGrid: strikes and maturities must be non-empty");
    for (double k : strikes)
      if (!(k >= 0.0)) throw ConfigError("MarketGrid: strikes must be nonnegative");
    for (std::size_t j = 0; j < maturities.size(); ++j) {
      if (!(maturities[j] > 0.0)) throw ConfigError("MarketGrid: maturities must be positive");
      if (j > 0 && !(maturities[j] > maturities[j - 1])) throw ConfigError("MarketGrid: maturities must increase");
    }
  }

  /// Step indices k(j) with T_j = k(j) h on `grid`.
  std::vector<int> steps_on(const numerics::TimeGrid& grid) const {
    std::vector<int> k;
    for (double t : maturities) {
      const int idx = grid.index_of(t);
      if (idx <= 0) throw ConfigError("maturity " + io::format_double(t) + " is not on the time grid (h = " +
                                      io::format_double(grid.step()) + ")");
      k.push_back(idx);
    }
    return k;
  }

  /// Equidistant grid with step close to `step` ending at T_N on which every
  /// maturity is a node.
  numerics::TimeGrid grid_for_step(double step) const {
    const int n = static_cast<int>(std::lround(horizon() / step));
    if (n <= 0 || std::abs(n * step - horizon()) > 1e-9 * horizon())
      throw ConfigError("horizon " + io::format_double(horizon()) + " is not a multiple of step " + io::format_double(step));
    numerics::TimeGrid g(n, horizon());
    steps_on(g);
    return g;
  }
};

/// j(i) = min{j : k(j) > i}, 0-based j.
inline int maturity_index(const std::vector<int>& k, int i) {
  for (std::size_t j = 0; j < k.size(); ++j)
    if (k[j] > i) return static_cast<int>(j);
  throw std::out_of_range("maturity_index: step " + std::to_string(i) + " beyond last maturity");
}

/// Prices on a MarketGrid: values[l, j] for strike l and maturity j.
struct PriceMatrix {
  MarketGrid grid;
  Matrix values;
  Matrix std_errors;
  nlohmann::json settings = nlohmann::json::object();

  /// Strike rows, maturity columns; first header cell is "strike".
  std::string to_csv() const {
    std::ostringstream os;
    os << "strike";
    for (double t : grid.maturities) os << ',' << io::format_double(t);
    os << '\n';
    for (std::size_t l = 0; l < grid.L(); ++l) {
      os << io::format_double(grid.strikes[l]);
      for (std::size_t j = 0; j < grid.N(); ++j)
        os << ',' << io::format_double(values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)));
      os << '\n';
    }
    return os.str();
  }

  nlohmann::json sidecar() const {
    nlohmann::json j = settings;
    std::vector<std::vector<double>> se(grid.L());
    for (std::size_t l = 0; l < grid.L(); ++l)
      for (std::size_t m = 0; m < grid.N(); ++m)
        se[l].push_back(std_errors.size() ? std_errors(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) : 0.0);
    j["std_errors"] = se;
    return j;
  }

  void write(const std::string& csv_path) const {
    io::write_file(csv_path, to_csv());
    io::write_file(settings_path(csv_path), sidecar().dump(2) + "\n");
  }

  static std::string settings_path(const std::string& csv_path) {
    const auto dot = csv_path.rfind(".csv");
    return (dot == std::string::npos ? csv_path : csv_path.substr(0, dot)) + ".settings.json";
  }

  static PriceMatrix from_csv(const std::string& text, const std::string& where = "prices") {
    std::istringstream in(text);
    std::string line;
    PriceMatrix p;
    if (!std::getline(in, line)) throw SchemaError(where + ": empty price file");
    const auto header = io::split_csv_line(line);
    if (header.size() < 2 || header[0] != "strike") throw SchemaError(where + ": header must start with 'strike'");
    for (std::size_t j = 1; j < header.size(); ++j) p.grid.maturities.push_back(io::parse_double(header[j], where + ":1"));
    std::vector<std::vector<double>> rows;
    for (int line_no = 2; std::getline(in, line); ++line_no) {
      if (io::trim(line).empty()) continue;
      const auto f = io::split_csv_line(line);
      const std::string loc = where + ":" + std::to_string(line_no);
      if (f.size() != header.size()) throw SchemaError(loc + ": expected " + std::to_string(header.size()) + " fields");
      p.grid.strikes.push_back(io::parse_double(f[0], loc));
      rows.emplace_back();
      for (std::size_t j = 1; j < f.size(); ++j) rows.back().push_back(io::parse_double(f[j], loc));
    }
    p.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p.grid.N()));
    for (std::size_t l = 0; l < rows.size(); ++l)
      for (std::size_t j = 0; j < rows[l].size(); ++j) p.values(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = rows[l][j];
    p.grid.validate();
    return p;
  }

  /// Reads the CSV and, when present, its settings sidecar with standard errors.
  static PriceMatrix read(const std::string& csv_path) {
    auto p = from_csv(io::read_file(csv_path), csv_path);
    const auto side = settings_path(csv_path);
    if (!std::filesystem::exists(side)) return p;
    try {
      p.settings = nlohmann::json::parse(io::read_file(side));
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(side + ": " + e.what());
    }
    if (p.settings.contains("std_errors")) {
      const auto& se = p.settings["std_errors"];
      if (!se.is_array() || se.size() != p.grid.L()) throw SchemaError(side + ": std_errors must have one row per strike");
      p.std_errors.resize(p.values.rows(), p.values.cols());
      for (std::size_t l = 0; l < se.size(); ++l) {
        if (!se[l].is_array() || se[l].size() != p.grid.N()) throw SchemaError(side + ": std_errors must have one column per maturity");
        for (std::size_t j = 0; j < se[l].size(); ++j)
          p.std_errors(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = se[l][j].get<double>();
      }
      p.settings.erase("std_errors");
    }
    return p;
  }
};

}  // namespace rbergomi::market
