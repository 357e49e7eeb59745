#include <cmath>

#include "../oracles.hpp"
#include "doctest.h"
#include "msdiff/mollify.hpp"

using namespace msdiff;

TEST_SUITE("mollify") {
  TEST_CASE("kernel has unit mass and compact support") {
    const double z = oracle::integrate_1d([](double s) { return std::exp(-1.0 / (1.0 - s * s)); }, -1.0, 1.0, 2000);
    CHECK(Mollifier::normalization() == doctest::Approx(z).epsilon(1e-12));
    const Mollifier m(0.1);
    CHECK(oracle::integrate_1d([&](double s) { return m.kernel(s); }, -0.1, 0.1) ==
          doctest::Approx(1.0).epsilon(1e-10));
    CHECK(m.kernel(0.1) == 0.0);
    CHECK(m.kernel(-0.2) == 0.0);
    CHECK(m.kernel(0.03) == doctest::Approx(m.kernel(-0.03)));
  }

  TEST_CASE("resolution guard") {
    MollifyQuadrature q{PeriodicGrid::line(10), 1.0, 16};
    auto one = [](const Point&, double) { return 1.0; };
    CHECK_THROWS_AS(mollify_spacetime(one, one, Mollifier(0.1), q), EpsilonTooSmallForGrid);
    CHECK_THROWS_AS(Mollifier(0.0), EpsilonTooSmallForGrid);
  }

  TEST_CASE("doubled test function is symmetric under exchange") {
    auto phi = [](const Point& x, double t) { return (1.0 + 0.5 * std::cos(oracle::kTwoPi * x[0])) * (1.0 - t); };
    const DoubledTestFunction psi(phi, Mollifier(0.2), 1);
    const Point x{0.05, 0, 0}, y{0.95, 0, 0};
    // Points across the periodic seam are 0.1 apart.
    CHECK(psi.kernel(x, 0.3, y, 0.35) > 0.0);
    CHECK(psi(x, 0.3, y, 0.35) == doctest::Approx(psi(y, 0.35, x, 0.3)));
  }

  TEST_CASE("space-time mollification approaches the plain integral") {
    MollifyQuadrature q{PeriodicGrid::line(160), 1.0, 16};
    auto f = [](const Point& x, double t) { return (1.0 + 0.5 * std::sin(oracle::kTwoPi * x[0])) * std::exp(-t); };
    auto phi = [](const Point& x, double t) {
      return t >= 1 ? 0.0 : (1.0 + 0.5 * std::cos(oracle::kTwoPi * x[0])) * std::pow(1 - t * t, 3);
    };
    const double plain = plain_spacetime_integral(f, phi, q);
    const double e1 = std::abs(mollify_spacetime(f, phi, Mollifier(0.2), q) - plain);
    const double e2 = std::abs(mollify_spacetime(f, phi, Mollifier(0.1), q) - plain);
    CHECK(e2 < e1);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.1));
  }

  TEST_CASE("rate fit recovers a power law") {
    std::vector<RateRow> rows;
    for (double e : {0.4, 0.2, 0.1}) rows.push_back({e, 0, 0, 3.0 * e * e});
    CHECK(fit_rate(rows).fit.order == doctest::Approx(2.0));
  }
}
