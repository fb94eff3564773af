#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rbergomi/errors.hpp"
#include "rbergomi/io/csv.hpp"
#include "rbergomi/market/surface.hpp"
#include "rbergomi/numerics/spline.hpp"
#include "rbergomi/pricing/black_scholes.hpp"

namespace rbergomi::market {

/// Calendar date as days since 1970-01-01.
struct Date {
  int y = 1970, m = 1, d = 1;

  static Date parse(const std::string& s, const std::string& where) {
    Date out;
    char extra = 0;
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2d-%2d%c", &out.y, &out.m, &out.d, &extra) != 3 || out.m < 1 ||
        out.m > 12 || out.d < 1 || out.d > days_in_month(out.y, out.m))
      throw ParseError(where + ": invalid ISO-8601 date '" + s + "'");
    return out;
  }

  static int days_in_month(int y, int m) {
    static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return m == 2 && leap ? 29 : days[m - 1];
  }

  long serial() const {
    // Days from civil (proleptic Gregorian).
    const int yy = y - (m <= 2);
    const long era = (yy >= 0 ? yy : yy - 399) / 400;
    const long yoe = yy - era * 400;
    const long doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const long doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + doe - 719468;
  }

  static Date from_serial(long z) {
    // Civil from days, inverse of serial().
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const long doe = z - era * 146097;
    const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const long mp = (5 * doy + 2) / 153;
    Date out;
    out.d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    out.m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    out.y = static_cast<int>(yoe + era * 400 + (out.m <= 2));
    return out;
  }

  std::string str() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
  }
};

/// ACT/365 fixed year fraction.
inline double year_fraction(const Date& from, const Date& to) { return static_cast<double>(to.serial() - from.serial()) / 365.0; }

struct ChainRecord {
  Date quote_date;
  Date expiry_date;
  double strike = 0.0;
  double bid = 0.0;
  double ask = 0.0;
  double underlying_close = 0.0;
  int line = 0;

  double maturity() const { return year_fraction(quote_date, expiry_date); }
};

struct ChainLoad {
  std::vector<ChainRecord> records;
  std::vector<std::string> warnings;
};

inline const char* chain_header() { return "quote_date,expiry_date,strike,bid,ask,underlying_close"; }

/// Parses a chain CSV. Malformed fields raise ParseError; rows violating
/// ask >= bid >= 0 or expiry > quote date are rejected with a warning.
inline ChainLoad parse_chain(const std::string& text, const std::string& where = "chain") {
  ChainLoad out;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || io::trim(line).empty()) {
    out.warnings.push_back(where + ": empty chain file");
    return out;
  }
  if (io::trim(line) != chain_header()) throw SchemaError(where + ":1: expected header " + std::string(chain_header()));
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (io::trim(line).empty()) continue;
    const std::string loc = where + ":" + std::to_string(line_no);
    const auto f = io::split_csv_line(line);
    if (f.size() != 6) throw SchemaError(loc + ": expected 6 fields, got " + std::to_string(f.size()));
    ChainRecord r{Date::parse(f[0], loc), Date::parse(f[1], loc), io::parse_double(f[2], loc), io::parse_double(f[3], loc),
                  io::parse_double(f[4], loc), io::parse_double(f[5], loc), line_no};
    if (!(r.bid >= 0.0) || !(r.ask >= r.bid)) {
      out.warnings.push_back(loc + ": rejected crossed or negative quote (bid " + io::format_double(r.bid) + ", ask " +
                             io::format_double(r.ask) + ")");
      continue;
    }
    if (r.expiry_date.serial() <= r.quote_date.serial()) {
      out.warnings.push_back(loc + ": rejected expiry not after quote date");
      continue;
    }
    if (!(r.strike >= 0.0) || !(r.underlying_close > 0.0)) throw SchemaError(loc + ": strike must be >= 0 and close > 0");
    out.records.push_back(r);
  }
  if (out.records.empty()) out.warnings.push_back(where + ": no valid records");
  return out;
}

inline ChainLoad load_chain(const std::string& path) { return parse_chain(io::read_file(path), path); }

/// Best bid and ask per (expiry, strike) and their average.
struct Quote {
  double maturity = 0.0;
  double strike = 0.0;
  double bid = 0.0;
  double ask = 0.0;
  double mid() const { return 0.5 * (bid + ask); }
};

inline double mid_price(const ChainRecord& r) { return 0.5 * (r.bid + r.ask); }

/// Aggregates quotes of the same contract to max bid and min ask.
inline std::vector<Quote> aggregate_quotes(const std::vector<ChainRecord>& records) {
  std::map<std::pair<long, double>, Quote> book;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.expiry_date.serial(), r.strike);
    auto it = book.find(key);
    if (it == book.end()) {
      book.emplace(key, Quote{r.maturity(), r.strike, r.bid, r.ask});
    } else {
      it->second.bid = std::max(it->second.bid, r.bid);
      it->second.ask = std::min(it->second.ask, r.ask);
    }
  }
  std::vector<Quote> out;
  for (const auto& [k, q] : book)
    if (q.ask >= q.bid) out.push_back(q);
  return out;
}

struct SurfaceBuild {
  PriceMatrix surface;  // on the requested grid
  PriceMatrix quoted;   // mids at the selected quoted maturities, same strikes
  std::vector<std::string> warnings;
};

/// Selects, for each grid maturity, the exact quoted maturity or the nearest
/// quoted maturities on either side; per strike, fits a cubic spline in
/// maturity through the selected mids and evaluates it on the grid with
/// constant extrapolation. Quotes already on the grid are used as they are.
inline SurfaceBuild build_surface(const std::vector<ChainRecord>& records, const MarketGrid& grid) {
  grid.validate();
  const auto quotes = aggregate_quotes(records);
  SurfaceBuild out;
  const Eigen::Index L = static_cast<Eigen::Index>(grid.L()), N = static_cast<Eigen::Index>(grid.N());
  out.surface.grid = grid;
  out.surface.values.resize(L, N);
  out.surface.settings = {{"source", "chain"}};

  // Distinct quoted maturities, ascending.
  std::vector<double> all_mats;
  for (const auto& q : quotes) all_mats.push_back(q.maturity);
  std::sort(all_mats.begin(), all_mats.end());
  all_mats.erase(std::unique(all_mats.begin(), all_mats.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 all_mats.end());
  std::vector<double> selected;
  for (double t : grid.maturities) {
    const auto on = std::find_if(all_mats.begin(), all_mats.end(), [&](double m) { return std::abs(m - t) < 1e-12; });
    if (on != all_mats.end()) {
      selected.push_back(*on);
      continue;
    }
    // Nearest quoted maturity on each side.
    const auto above = std::upper_bound(all_mats.begin(), all_mats.end(), t);
    if (above != all_mats.end()) selected.push_back(*above);
    if (above != all_mats.begin()) selected.push_back(*(above - 1));
  }
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());
  out.quoted.grid = {grid.strikes, selected};
  out.quoted.values.resize(L, static_cast<Eigen::Index>(selected.size()));
  out.quoted.settings = {{"source", "chain"}};

  for (Eigen::Index l = 0; l < L; ++l) {
    const double K = grid.strikes[static_cast<std::size_t>(l)];
    std::vector<double> mats, mids;
    for (double t : selected) {
      const auto it = std::find_if(quotes.begin(), quotes.end(), [&](const Quote& q) {
        return std::abs(q.strike - K) < 1e-9 * std::max(1.0, K) && std::abs(q.maturity - t) < 1e-12;
      });
      if (it == quotes.end()) continue;
      mats.push_back(t);
      mids.push_back(it->mid());
    }
    if (mats.size() < std::min<std::size_t>(2, selected.size()) || mats.empty())
      throw MissingStrike("build_surface: strike " + io::format_double(K) + " has " + std::to_string(mats.size()) +
                          " of the selected maturities quoted");
    if (mats.size() != selected.size())
      throw MissingStrike("build_surface: strike " + io::format_double(K) + " is missing a selected maturity");
    for (std::size_t j = 0; j < mats.size(); ++j) out.quoted.values(l, static_cast<Eigen::Index>(j)) = mids[j];
    std::optional<numerics::Spline1D> spline;
    if (mats.size() >= 2) spline.emplace(mats, mids);
    for (Eigen::Index j = 0; j < N; ++j) {
      const double t = grid.maturities[static_cast<std::size_t>(j)];
      const auto on = std::find_if(mats.begin(), mats.end(), [&](double m) { return std::abs(m - t) < 1e-12; });
      if (on != mats.end()) {
        out.surface.values(l, j) = mids[static_cast<std::size_t>(on - mats.begin())];
        continue;
      }
      if (t < mats.front() || t > mats.back())
        out.warnings.push_back("constant extrapolation: strike " + io::format_double(K) + ", maturity " + io::format_double(t));
      out.surface.values(l, j) = spline ? (*spline)(t) : mids.front();
    }
  }
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index l = 1; l < L; ++l)
      if (out.surface.values(l, j) > out.surface.values(l - 1, j))
        out.warnings.push_back("surface not nonincreasing in strike at maturity " +
                               io::format_double(grid.maturities[static_cast<std::size_t>(j)]));
  return out;
}

struct SpotVariance {
  double v0 = 0.0;
  double strike = 0.0;
  double maturity = 0.0;
  std::vector<std::string> warnings;
};

/// Square of the implied volatility of the contract with the shortest
/// maturity whose strike is nearest the underlying close.
inline SpotVariance spot_variance_proxy(const std::vector<ChainRecord>& records, double rate = 0.0) {
  if (records.empty()) throw SchemaError("spot_variance_proxy: empty chain");
  const auto quotes = aggregate_quotes(records);
  if (quotes.empty()) throw SchemaError("spot_variance_proxy: no valid quotes");
  double spot = records.front().underlying_close;
  double shortest = quotes.front().maturity;
  for (const auto& q : quotes) shortest = std::min(shortest, q.maturity);
  const Quote* best = nullptr;
  for (const auto& q : quotes)
    if (std::abs(q.maturity - shortest) < 1e-12 && (!best || std::abs(q.strike - spot) < std::abs(best->strike - spot))) best = &q;
  SpotVariance out;
  out.strike = best->strike;
  out.maturity = best->maturity;
  if (std::abs(best->strike - spot) > 1e-9 * spot)
    out.warnings.push_back("no ATM quote at the shortest maturity; using nearest strike " + io::format_double(best->strike));
  const auto iv = pricing::implied_vol(best->mid(), spot, best->strike, best->maturity, rate);
  if (iv.at_lower_bound) out.warnings.push_back("ATM price at the no-arbitrage lower bound; implied vol 0");
  out.v0 = iv.sigma * iv.sigma;
  return out;
}

}  // namespace rbergomi::market
