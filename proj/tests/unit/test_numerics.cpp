#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "catch_amalgamated.hpp"
#include "rbergomi/numerics/linalg.hpp"
#include "rbergomi/numerics/rng.hpp"
#include "rbergomi/numerics/soe.hpp"
#include "rbergomi/numerics/special.hpp"
#include "rbergomi/numerics/spline.hpp"
#include "rbergomi/numerics/time_grid.hpp"
#include "support/stats.hpp"

using namespace rbergomi;
using Catch::Approx;

namespace {

double gamma_by_quadrature(double a, double x) {
  boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate([a](double s) { return std::pow(s, a - 1.0) * std::exp(-s); }, 0.0, x);
}

}  // namespace

TEST_CASE("lower incomplete gamma matches closed forms and quadrature", "[numerics]") {
  CHECK(numerics::lower_incomplete_gamma(1.0, 2.0) == Approx(1.0 - std::exp(-2.0)).epsilon(1e-14));
  CHECK(numerics::lower_incomplete_gamma(0.3, 0.0) == 0.0);
  CHECK(numerics::lower_incomplete_gamma(0.57, 0.05) == Approx(gamma_by_quadrature(0.57, 0.05)).margin(1e-10));

  for (double a : {0.05, 0.57, 1.0, 2.5, 7.0}) {
    for (double x : {1e-4, 0.05, 0.7, 3.0, 12.0, 40.0}) {
      const double ref = boost::math::tgamma_lower(a, x);
      CHECK(numerics::lower_incomplete_gamma(a, x) == Approx(ref).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(numerics::lower_incomplete_gamma(0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(numerics::lower_incomplete_gamma(1.0, -1.0), std::domain_error);
}

TEST_CASE("lower incomplete gamma is nondecreasing and saturates", "[numerics][property]") {
  for (double a : {0.07, 0.57, 1.3, 4.0}) {
    double prev = 0.0;
    for (int k = 1; k <= 400; ++k) {
      const double v = numerics::lower_incomplete_gamma(a, 0.05 * k);
      CHECK(v >= prev);
      prev = v;
    }
    CHECK(numerics::lower_incomplete_gamma(a, 50.0 * a + 50.0) == Approx(std::tgamma(a)).epsilon(1e-10));
  }
  // x = 50a itself for a moderate a
  CHECK(numerics::lower_incomplete_gamma(1.0, 50.0) == Approx(1.0).epsilon(1e-10));
}

TEST_CASE("scaled lower gamma and its a-derivative", "[numerics]") {
  for (double a : {0.2, 0.57, 0.95}) {
    for (double x : {1e-6, 0.01, 0.5, 3.0, 30.0}) {
      const auto g = numerics::scaled_lower_gamma(a, x);
      CHECK(g.value == Approx(numerics::lower_incomplete_gamma(a, x) * std::pow(x, -a)).epsilon(1e-12));
      const double e = 1e-6;
      const double fd = (numerics::scaled_lower_gamma(a + e, x).value - numerics::scaled_lower_gamma(a - e, x).value) /
                        (2 * e);
      CHECK(g.d_da == Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("cholesky small cases", "[numerics]") {
  Matrix id = Matrix::Identity(4, 4);
  CHECK((numerics::cholesky(id) - id).cwiseAbs().maxCoeff() == 0.0);

  Matrix s(2, 2);
  s << 4, 2, 2, 3;
  Matrix l = numerics::cholesky(s);
  CHECK(l(0, 0) == Approx(2.0));
  CHECK(l(0, 1) == 0.0);
  CHECK(l(1, 0) == Approx(1.0));
  CHECK(l(1, 1) == Approx(std::sqrt(2.0)));
  CHECK((l * l.transpose() - s).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("cholesky jitter policy", "[numerics]") {
  Matrix singular(2, 2);
  singular << 1, 1, 1, 1;
  auto f = numerics::cholesky_with_info(singular);
  CHECK(f.jitter > 0.0);
  CHECK(f.jitter <= 1e-12 * singular.trace() / 2 + 1e-30);
  CHECK((f.lower * f.lower.transpose() - singular).cwiseAbs().maxCoeff() <= 1.001 * f.jitter);

  Matrix indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(numerics::cholesky(indefinite), NotPSD);
}

TEST_CASE("time grid", "[numerics]") {
  numerics::TimeGrid g(20, 1.0);
  CHECK(g.step() == Approx(0.05));
  CHECK(g.time(0) == 0.0);
  CHECK(g.time(20) == 1.0);
  CHECK(g.index_of(0.2) == 4);
  CHECK(g.index_of(0.21) == -1);
  CHECK(g.index_of(1.0) == 20);
}

TEST_CASE("fit_soe meets its tolerance on a dense grid", "[numerics][soe]") {
  const double h = 1.0 / 20, T = 1.0, tol = 1e-4;
  auto soe = numerics::fit_soe(0.07, h, T, tol);
  const double bound = tol * std::pow(h, 0.07 - 0.5);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double x = h + (T - h) * k / 9999.0;
    worst = std::max(worst, std::abs(std::pow(x, 0.07 - 0.5) - soe(x)));
  }
  for (int k = 0; k < 10000; ++k) {
    const double x = std::exp(std::log(h) + (std::log(T) - std::log(h)) * k / 9999.0);
    worst = std::max(worst, std::abs(std::pow(x, 0.07 - 0.5) - soe(x)));
  }
  CHECK(worst <= bound);
  CHECK(soe.sup_error <= bound);
  for (std::size_t j = 1; j < soe.nodes.size(); ++j) CHECK(soe.nodes[j] > soe.nodes[j - 1]);
  for (double w : soe.weights) CHECK(w > 0.0);
}

TEST_CASE("fit_soe term count is monotone in the tolerance", "[numerics][soe][property]") {
  for (double H : {0.07, 0.2, 0.3, 0.45}) {
    for (double h : {1.0 / 10, 1.0 / 20, 1.0 / 200}) {
      int prev = 1 << 20;
      for (double tol : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
        const int terms = numerics::fit_soe(H, h, 1.0, tol).terms();
        CHECK(terms <= prev);
        prev = terms;
      }
    }
  }
}

TEST_CASE("soe error decreases with the number of terms", "[numerics][soe][property]") {
  for (double H : {0.07, 0.3}) {
    for (double h : {1.0 / 20, 1.0 / 200}) {
      double prev = 1e300;
      for (int m = 2; m <= 40; m += 2) {
        const double e = numerics::soe_with_terms(m, H, h, 1.0).sup_error;
        CHECK(e < prev);
        prev = e;
      }
    }
  }
}

TEST_CASE("soe degenerate cases", "[numerics][soe]") {
  auto flat = numerics::soe_with_terms(1, 0.5, 0.05, 1.0);
  REQUIRE(flat.terms() == 1);
  CHECK(flat.weights[0] == 1.0);
  CHECK(flat.nodes[0] == 0.0);
  CHECK(numerics::fit_soe(0.5, 0.05, 1.0, 1e-4).terms() == 1);
  CHECK_THROWS_AS(numerics::fit_soe(0.07, 1e-3, 1.0, 1e-12, 8), ToleranceUnreachable);
}

TEST_CASE("soe weights are differentiable in H", "[numerics][soe]") {
  auto soe = numerics::fit_soe(0.1, 0.05, 1.0, 1e-4);
  for (double H : {0.05, 0.1, 0.3}) {
    const auto dw = soe.weight_derivatives_at(H);
    const auto up = soe.weights_at(H + 1e-6);
    const auto dn = soe.weights_at(H - 1e-6);
    for (std::size_t j = 0; j < dw.size(); ++j) CHECK(dw[j] == Approx((up[j] - dn[j]) / 2e-6).epsilon(1e-6));
  }
  // Same nodes approximate the kernel at other H as well.
  const auto w = soe.weights_at(0.3);
  double worst = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double x = 0.05 + 0.95 * k / 1000.0;
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * std::exp(-soe.nodes[j] * x);
    worst = std::max(worst, std::abs(s - std::pow(x, -0.2)));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("spline examples", "[numerics][spline]") {
  std::vector<double> x{0, 1, 2}, y{0, 1, 2};
  numerics::Spline1D s(x, y);
  CHECK(s(1.5) == Approx(1.5).margin(1e-15));
  CHECK(s(1.0) == 1.0);
  CHECK(s(-1.0) == 0.0);
  CHECK(s(5.0) == 2.0);

  std::vector<double> dup{0, 1, 1};
  CHECK_THROWS_AS(numerics::Spline1D(dup, y), DuplicateKnots);
}

TEST_CASE("spline reproduces knots exactly and is smooth", "[numerics][spline][property]") {
  std::vector<double> x{0.1, 0.25, 0.5, 0.9, 1.4, 2.0};
  std::vector<double> y{3.0, -1.0, 2.5, 0.7, 0.7, 4.2};
  numerics::Spline1D s(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(s(x[i]) == y[i]);
  // C2 at interior knots: one-sided second differences (Richardson
  // extrapolated) agree.
  auto left = [&](double t, double e) { return (s(t) - 2 * s(t - e) + s(t - 2 * e)) / (e * e); };
  auto right = [&](double t, double e) { return (s(t + 2 * e) - 2 * s(t + e) + s(t)) / (e * e); };
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    const double e = 1e-4;
    const double l2 = 2 * left(x[i], e) - left(x[i], 2 * e);
    const double r2 = 2 * right(x[i], e) - right(x[i], 2 * e);
    CHECK(l2 == Approx(r2).epsilon(1e-4).margin(1e-3));
  }
}

TEST_CASE("spline is near-exact on cubics away from the boundary", "[numerics][spline][property]") {
  std::vector<double> x, y;
  auto cubic = [](double t) { return 0.3 * t * t * t - t * t + 2 * t - 1; };
  for (int i = 0; i <= 200; ++i) {
    x.push_back(i * 0.05);
    y.push_back(cubic(i * 0.05));
  }
  numerics::Spline1D s(x, y);
  for (double t = 4.0; t <= 6.0; t += 0.013) CHECK(s(t) == Approx(cubic(t)).margin(1e-9));
}

TEST_CASE("spline integral matches quadrature", "[numerics][spline]") {
  std::vector<double> x{0.0, 0.3, 0.7, 1.0, 2.0};
  std::vector<double> y{0.05, 0.04, 0.045, 0.03, 0.035};
  numerics::Spline1D s(x, y);
  boost::math::quadrature::tanh_sinh<double> q;
  for (auto [lo, hi] : std::vector<std::pair<double, double>>{{0.0, 1.0}, {0.1, 0.65}, {0.5, 1.7}, {0.0, 2.0}}) {
    const double ref = q.integrate([&](double t) { return s(t); }, lo, hi);
    CHECK(s.integrate(lo, hi) == Approx(ref).margin(1e-12));
  }
  CHECK(s.integrate(-1.0, 0.0) == Approx(0.05));
  CHECK(s.integrate(2.0, 3.0) == Approx(0.035));
}

TEST_CASE("rng streams are deterministic", "[numerics][rng]") {
  numerics::RngStream a{42, 3, 7};
  auto x = numerics::normals(a, 1001);
  auto y = numerics::normals(a, 1001);
  CHECK(x == y);
  CHECK(a.normal(500) == x[500]);
  numerics::RngStream b{42, 3, 8};
  CHECK(numerics::normals(b, 10) != numerics::normals(a, 10));
}

TEST_CASE("rng normal moments", "[numerics][rng][statistical]") {
  numerics::RngStream s{2024, 0, 0};
  const auto z = numerics::normals(s, 1000000);
  const double n = static_cast<double>(z.size());
  const double m = std::accumulate(z.begin(), z.end(), 0.0) / n;
  double v = 0.0;
  for (double e : z) v += (e - m) * (e - m);
  v /= n - 1;
  CHECK(std::abs(m) < 4.0 / std::sqrt(n));
  CHECK(std::abs(v - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("rng distinct streams are uncorrelated", "[numerics][rng][statistical]") {
  const int n = 100000;
  std::vector<double> x(n), y(n);
  for (int k = 0; k < n; ++k) {
    x[k] = numerics::RngStream{7, static_cast<std::uint32_t>(k), 0}.normal(0);
    y[k] = numerics::RngStream{7, static_cast<std::uint32_t>(k), 1}.normal(0);
  }
  CHECK(std::abs(test_support::correlation(x, y)) < 0.013);
}

TEST_CASE("rng passes a one-sample KS test", "[numerics][rng][statistical]") {
  auto z = numerics::normals(numerics::RngStream{99, 1, 2}, 100000);
  const double d = test_support::ks_statistic_normal(z);
  CHECK(d < 1.628 / std::sqrt(100000.0));
}
