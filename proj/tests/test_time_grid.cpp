#include <doctest.h>

#include <cmath>

#include "sldi/brownian.hpp"
#include "sldi/errors.hpp"
#include "sldi/time_grid.hpp"

using namespace sldi;

TEST_CASE("time grid validation") {
  CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5}), GridError);
  CHECK_THROWS_AS(TimeGrid({0.0, 1.0, 0.5}), GridError);
  CHECK_THROWS_AS(TimeGrid(std::vector<double>{}), GridError);
  CHECK_THROWS_AS(TimeGrid::with_step(0.0, 1.0, 0.0), GridError);

  const auto g = TimeGrid::with_step(0.0, 1.0, 0.3);
  REQUIRE(g.size() == 5);
  CHECK(g.t1() == 1.0);
  CHECK(g.dt(3) == doctest::Approx(0.1));
  for (std::size_t k = 0; k < g.steps(); ++k) CHECK(g.dt(k) > 0.0);
}

TEST_CASE("merging observation times into a grid") {
  const auto g = TimeGrid::uniform(0.0, 1.0, 4);
  const std::vector<double> extra{0.1, 0.5, 0.5 + 1e-13, 1.0};
  const auto m = g.merged(extra);
  CHECK(m.knots() == std::vector<double>{0.0, 0.1, 0.25, 0.5, 0.75, 1.0});
  CHECK(m.index_of(0.1) == std::optional<std::size_t>(1));
  CHECK_FALSE(m.index_of(0.2).has_value());
  const std::vector<double> outside{1.5};
  CHECK_THROWS_AS(g.merged(outside), GridError);
}

TEST_CASE("Brownian increments") {
  SUBCASE("zero-step grid gives no increments") {
    const auto p = sample_brownian(TimeGrid({0.0}), 3, 7);
    CHECK(p.steps() == 0);
  }
  SUBCASE("same seed reproduces increments bit for bit") {
    const auto g = TimeGrid::with_step(0.0, 1.0, 0.01);
    const auto a = sample_brownian(g, 2, 11), b = sample_brownian(g, 2, 11), c = sample_brownian(g, 2, 12);
    CHECK(a.increments == b.increments);
    CHECK(a.increments != c.increments);
  }
  SUBCASE("antithetic negates every increment") {
    const auto p = sample_brownian(TimeGrid::uniform(0.0, 1.0, 5), 2, 3);
    CHECK(p.antithetic().increments == -p.increments);
  }
  SUBCASE("per-coordinate variance is dt (chi-square interval)") {
    const std::size_t n = 100000;
    const auto p = sample_brownian(TimeGrid::uniform(0.0, 0.01 * n, n), 2, 2024);
    for (Eigen::Index i = 0; i < 2; ++i) {
      const Eigen::ArrayXd x = p.increments.row(i).transpose().array();
      const double var = (x - x.mean()).square().sum() / static_cast<double>(n - 1);
      // (n-1) s^2 / sigma^2 ~ chi2(n-1): sd of s^2 is sigma^2 sqrt(2 / (n-1)).
      const double se = 0.01 * std::sqrt(2.0 / static_cast<double>(n - 1));
      CHECK(std::abs(var - 0.01) < 3.0 * se);
    }
  }
  SUBCASE("invalid dimension") { CHECK_THROWS_AS(sample_brownian(TimeGrid({0.0, 1.0}), 0, 1), InvalidInput); }
}

TEST_CASE("coarsening sums fine increments") {
  const auto fine = TimeGrid::uniform(0.0, 1.0, 8);
  const auto coarse = TimeGrid::uniform(0.0, 1.0, 2);
  const auto p = sample_brownian(fine, 1, 5);
  const auto c = coarsen(p, fine, coarse);
  CHECK(c.increments(0, 0) == doctest::Approx(p.increments.leftCols(4).sum()));
  CHECK(c.increments(0, 1) == doctest::Approx(p.increments.rightCols(4).sum()));
  CHECK_THROWS_AS(coarsen(p, fine, TimeGrid::uniform(0.0, 1.0, 3)), GridError);
}
