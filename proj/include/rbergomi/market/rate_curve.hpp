#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rbergomi/errors.hpp"
#include "rbergomi/io/csv.hpp"
#include "rbergomi/numerics/spline.hpp"

namespace rbergomi::market {

/// Continuously compounded rate r(t): a constant, or a cubic spline through
/// quoted (tenor, rate) pairs with constant extrapolation.
class RateCurve {
 public:
  RateCurve(double constant = 0.0) : constant_(constant) {}  // NOLINT(google-explicit-constructor)
  RateCurve(const std::vector<double>& tenors, const std::vector<double>& rates) {
    if (tenors.empty() || tenors.size() != rates.size()) throw SchemaError("RateCurve: tenors and rates must be non-empty and aligned");
    if (tenors.size() == 1) {
      constant_ = rates.front();
      return;
    }
    spline_ = numerics::Spline1D(tenors, rates);
  }

  bool is_constant() const { return !spline_.has_value(); }
  double operator()(double t) const { return spline_ ? (*spline_)(t) : constant_; }
  /// int_0^t r(s) ds.
  double integral(double t) const { return spline_ ? spline_->integrate(0.0, t) : constant_ * t; }
  double discount(double t) const { return std::exp(-integral(t)); }

 private:
  double constant_ = 0.0;
  std::optional<numerics::Spline1D> spline_;
};

/// Reads `tenor_years,zero_rate` rows.
inline RateCurve load_rates(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line) || io::trim(line) != "tenor_years,zero_rate")
    throw SchemaError(path + ": expected header tenor_years,zero_rate");
  std::vector<double> tenors, rates;
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (io::trim(line).empty()) continue;
    const auto f = io::split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (f.size() != 2) throw SchemaError(where + ": expected 2 fields");
    tenors.push_back(io::parse_double(f[0], where));
    rates.push_back(io::parse_double(f[1], where));
    if (tenors.size() > 1 && !(tenors.back() > tenors[tenors.size() - 2])) throw SchemaError(where + ": tenors must increase");
  }
  if (tenors.empty()) throw SchemaError(path + ": no rate rows");
  return {tenors, rates};
}

}  // namespace rbergomi::market
