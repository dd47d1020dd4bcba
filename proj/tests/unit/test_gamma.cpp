// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "rblock/error.hpp"
#include "rblock/gamma.hpp"

using namespace rblock;

namespace {

// Mean over units of 1 - (1 - gamma)^(number of centers whose clipped block
// covers the unit), counting centers by brute force in long double.
long double brute_force_p(double gamma, std::size_t m, std::size_t n, std::size_t b, bool valid_only = false) {
  const long k = static_cast<long>(b / 2);
  long double total = 0.0L;
  for (long i = 0; i < static_cast<long>(m); ++i) {
    for (long j = 0; j < static_cast<long>(n); ++j) {
      long covering = 0;
      for (long ci = 0; ci < static_cast<long>(m); ++ci) {
        for (long cj = 0; cj < static_cast<long>(n); ++cj) {
          if (valid_only && (ci < k || cj < k || ci >= static_cast<long>(m) - k || cj >= static_cast<long>(n) - k))
            continue;
          if (std::labs(ci - i) <= k && std::labs(cj - j) <= k) ++covering;
        }
      }
      total += 1.0L - std::pow(1.0L - static_cast<long double>(gamma), static_cast<long double>(covering));
    }
  }
  return total / static_cast<long double>(m * n);
}

BlockGeometry geo(std::size_t m, std::size_t n, std::size_t b) { return BlockGeometry{m, n, b}; }

}  // namespace

TEST_SUITE("gamma_analytics") {
  TEST_CASE("geometry validation") {
    CHECK_NOTHROW(geo(8, 8, 3).validate());
    CHECK_THROWS_AS(geo(8, 8, 2).validate(), InvalidArgument);
    CHECK_THROWS_AS(geo(8, 8, 0).validate(), InvalidArgument);
    CHECK_THROWS_AS(geo(2, 8, 3).validate_fits(), InvalidArgument);
    CHECK(geo(7, 7, 3).exact_formula_applies());
    CHECK_FALSE(geo(6, 7, 3).exact_formula_applies());
    CHECK_THROWS_AS(geo(6, 7, 3).require_exact(), GeometryError);
    CHECK(geo(9, 9, 5).k() == 2);
  }

  TEST_CASE("mode names round-trip") {
    for (auto m : {GammaMode::Simple, GammaMode::Corrected, GammaMode::Exact}) CHECK(parse_gamma_mode(to_string(m)) == m);
    for (auto r : {CenterRegion::Full, CenterRegion::Valid}) CHECK(parse_center_region(to_string(r)) == r);
    CHECK_THROWS_AS(parse_gamma_mode("newton"), InvalidArgument);
  }

  TEST_CASE("simple and corrected") {
    CHECK(gamma_simple(0.2, 3) == doctest::Approx(0.2 / 9.0).epsilon(1e-15));
    CHECK(gamma_simple(0.0, 5) == 0.0);
    CHECK(gamma_simple(0.37, 1) == 0.37);
    CHECK(gamma_corrected(0.2, geo(32, 32, 3)) == doctest::Approx(0.2 * 1024.0 / (9.0 * 900.0)).epsilon(1e-15));
    CHECK(std::fabs(gamma_corrected(0.2, geo(32, 32, 3)) - 0.0252840) < 5e-8);
    CHECK(gamma_corrected(0.0, geo(32, 32, 3)) == 0.0);
    CHECK(gamma_corrected(0.37, geo(10, 12, 1)) == doctest::Approx(0.37).epsilon(1e-15));
    CHECK_THROWS_AS(gamma_corrected(0.2, geo(2, 32, 3)), InvalidArgument);
  }

  TEST_CASE("p_exact agrees with a brute-force count") {
    for (auto [m, n, b] : {std::tuple<std::size_t, std::size_t, std::size_t>{12, 12, 3}, {16, 20, 3}, {11, 13, 5}, {20, 20, 5}, {15, 16, 7}}) {
      for (double g : {0.0, 1e-6, 0.01, 0.05, 0.3, 0.9, 1.0}) {
        const double exact = p_exact(g, {m, n, b});
        CHECK(std::fabs(exact - static_cast<double>(brute_force_p(g, m, n, b))) <= 1e-12);
      }
    }
  }

  TEST_CASE("p_exact boundary values and degenerate block") {
    for (auto geom : {BlockGeometry{12, 12, 3}, BlockGeometry{32, 32, 3}, BlockGeometry{21, 25, 9}}) {
      CHECK(p_exact(0.0, geom) == 0.0);
      CHECK(std::fabs(p_exact(1.0, geom) - 1.0) <= 1e-12);
    }
    for (double g : {0.0, 0.013, 0.5, 1.0}) CHECK(p_exact(g, geo(5, 7, 1)) == g);
    CHECK_THROWS_AS(p_exact(0.1, geo(6, 12, 3)), GeometryError);
    CHECK_THROWS_AS(p_exact(1.5, geo(12, 12, 3)), InvalidArgument);
  }

  TEST_CASE("p_no_margin and p_valid_region") {
    CHECK(p_no_margin(0.0, 3) == 0.0);
    CHECK(p_no_margin(0.123, 1) == doctest::Approx(0.123).epsilon(1e-15));
    const double g = 0.0222222;
    const long double oracle = 1.0L - std::pow(1.0L - 0.0222222L, 9.0L);
    CHECK(std::fabs(p_no_margin(g, 3) - static_cast<double>(oracle)) <= 1e-15);
    CHECK(p_valid_region(0.0, geo(32, 32, 3)) == 0.0);
    const double p1 = p_no_margin(0.01, 3);
    const double p2 = p_valid_region(0.01, {10000, 10000, 3});
    CHECK(std::fabs(p2 - p1) / p1 <= 1e-3);
    CHECK_THROWS_AS(p_valid_region(0.1, geo(2, 8, 3)), InvalidArgument);
  }

  TEST_CASE("ordering and monotonicity on a grid") {
    for (auto geom : {BlockGeometry{32, 32, 3}, BlockGeometry{12, 14, 5}}) {
      double prev = -1.0;
      for (int i = 0; i <= 100; ++i) {
        const double g = i / 100.0;
        const double p = p_exact(g, geom);
        CHECK(p_valid_region(g, geom) <= p + 1e-15);
        CHECK(p <= p_no_margin(g, geom.b_size) + 1e-15);
        if (p < 1.0) CHECK(p > prev);
        else CHECK(p >= prev);
        prev = p;
      }
    }
  }

  TEST_CASE("small gamma asymptotics") {
    for (std::size_t b : {1u, 3u, 5u, 7u}) {
      for (double g : {1e-4, 1e-5, 1e-7}) {
        const double lin = static_cast<double>(b * b) * g;
        CHECK(std::fabs(p_no_margin(g, b) - lin) / lin <= 1e-2);
      }
    }
  }

  TEST_CASE("solver round trip and edges") {
    const BlockGeometry geom{32, 32, 3};
    for (double p : {0.1, 0.2, 0.5, 0.9}) {
      const double g = solve_gamma_exact(p, geom, 1e-12);
      CHECK(std::fabs(p_exact(g, geom) - p) <= 1e-10);
    }
    CHECK(solve_gamma_exact(0.0, geom) == 0.0);
    CHECK(solve_gamma_exact(1.0, geom) == 1.0);
    CHECK(std::fabs(solve_gamma_exact(0.3, geo(9, 9, 1)) - 0.3) <= 1e-12);
    const double star = solve_gamma_exact(0.5, geom, 1e-10);
    CHECK(std::fabs(p_exact(star, geom) - 0.5) <= 1e-10);
    CHECK(star == doctest::Approx(0.0775644).epsilon(1e-6));
    CHECK_THROWS_AS(solve_gamma_exact(0.5, geo(6, 6, 3)), GeometryError);
    CHECK_THROWS_AS(solve_gamma_exact(0.5, geom, 0.0), InvalidArgument);
    CHECK(gamma_for(0.2, geom, GammaMode::Simple) == gamma_simple(0.2, 3));
    CHECK(gamma_for(0.2, geom, GammaMode::Corrected) == gamma_corrected(0.2, geom));
    CHECK(std::fabs(p_exact(gamma_for(0.2, geom, GammaMode::Exact), geom) - 0.2) <= 1e-12);
  }

  TEST_CASE("region decomposition reconstructs p_exact") {
    for (auto geom : {BlockGeometry{12, 12, 3}, BlockGeometry{32, 30, 5}}) {
      for (double g : {0.01, 0.05, 0.4}) {
        const auto e = region_expected_drops(g, geom);
        CHECK(std::fabs(e.total() / static_cast<double>(geom.m * geom.n) - p_exact(g, geom)) <= 1e-12);
      }
    }
  }

  TEST_CASE("unit map and classification") {
    const BlockGeometry geom{12, 12, 3};
    const auto map = unit_drop_probability_map(0.05, geom);
    double mean = 0.0;
    for (double v : map) mean += v;
    CHECK(std::fabs(mean / 144.0 - p_exact(0.05, geom)) <= 1e-12);
    CHECK(map[0] == doctest::Approx(1.0 - std::pow(0.95, 4.0)).epsilon(1e-14));
    CHECK(map[5 * 12 + 5] == doctest::Approx(1.0 - std::pow(0.95, 9.0)).epsilon(1e-14));
    CHECK(classify_unit(geom, 0, 0) == UnitRegion::Corner);
    CHECK(classify_unit(geom, 0, 5) == UnitRegion::Edge);
    CHECK(classify_unit(geom, 5, 5) == UnitRegion::Interior);
    const auto valid = unit_drop_probability_map(0.05, geom, CenterRegion::Valid);
    double vmean = 0.0;
    for (double v : valid) vmean += v;
    CHECK(std::fabs(vmean / 144.0 - static_cast<double>(brute_force_p(0.05, 12, 12, 3, true))) <= 1e-12);
  }

  TEST_CASE("monte carlo: degenerate gammas") {
    const RngStream rng(1, 0);
    const auto zero = mc_drop_rate(0.0, {12, 12, 3}, 2000, rng);
    for (double f : zero.freq_map) CHECK(f == 0.0);
    CHECK(zero.empirical_p == 0.0);
    const auto one = mc_drop_rate(1.0, {12, 12, 3}, 2000, rng);
    for (double f : one.freq_map) CHECK(f == 1.0);
    CHECK(one.empirical_p == 1.0);
  }

  TEST_CASE("monte carlo: regions against closed forms") {
    const BlockGeometry geom{12, 12, 3};
    const double g = 0.05;
    const std::uint64_t trials = 100000;
    const auto rep = mc_drop_rate(g, geom, trials, RngStream(2024, 0));
    REQUIRE(rep.analytic_p.has_value());
    CHECK(*rep.abs_deviation <= 3.0 * rep.sigma_exact);

    // Interior units are never clipped: each is dropped w.p. 1 - (1 - g)^9.
    const double interior = 1.0 - std::pow(1.0 - g, 9.0);
    const double sd_unit = std::sqrt(interior * (1.0 - interior) / static_cast<double>(trials));
    CHECK(std::fabs(*rep.region_means.interior - interior) <= 3.0 * sd_unit);

    const double corner = 1.0 - std::pow(1.0 - g, 4.0);
    const double sd_corner = std::sqrt(corner * (1.0 - corner) / static_cast<double>(trials));
    CHECK(std::fabs(rep.freq_map[0] - corner) <= 3.0 * sd_corner);

    double mean = 0.0;
    for (double f : rep.freq_map) {
      CHECK((f >= 0.0 && f <= 1.0));
      mean += f;
    }
    CHECK(std::fabs(mean / 144.0 - rep.empirical_p) <= 1e-12);
    // Correlation-aware sigma agrees with the spread actually observed.
    CHECK(rep.sigma_empirical == doctest::Approx(rep.sigma_exact).epsilon(0.05));
    CHECK(rep.sigma_binomial < rep.sigma_exact);
  }

  TEST_CASE("monte carlo: valid center region and small geometry") {
    const BlockGeometry geom{12, 12, 3};
    const auto rep = mc_drop_rate(0.05, geom, 20000, RngStream(5, 0), CenterRegion::Valid);
    REQUIRE(rep.analytic_p.has_value());
    CHECK(*rep.abs_deviation <= 3.0 * rep.sigma_exact);
    for (std::size_t j = 0; j < 12; ++j) CHECK(rep.freq_map[j] <= rep.freq_map[12 + j] + 0.02);

    const auto small = mc_drop_rate(0.1, {5, 5, 3}, 2000, RngStream(5, 0));
    CHECK_FALSE(small.analytic_p.has_value());
    CHECK(small.empirical_p > 0.0);
  }

  TEST_CASE("monte carlo is thread-count independent") {
    const RngStream rng(99, 3);
    const auto a = mc_drop_rate(0.07, {16, 16, 3}, 5000, rng, CenterRegion::Full, 1);
    const auto b = mc_drop_rate(0.07, {16, 16, 3}, 5000, rng, CenterRegion::Full, 3);
    CHECK(a.freq_map == b.freq_map);
    CHECK(a.empirical_p == b.empirical_p);
    CHECK(a.sigma_empirical == b.sigma_empirical);
  }

  TEST_CASE("report json shape") {
    const auto rep = mc_drop_rate(0.05, {12, 12, 3}, 1000, RngStream(1, 0));
    const auto j = nlohmann::json::parse(report_to_json(rep));
    for (const char* key : {"gamma", "geometry", "trials", "analytic_p", "empirical_p", "abs_deviation",
                            "region_means", "freq_map"}) {
      CHECK(j.contains(key));
    }
    CHECK(j["geometry"]["b_size"] == 3);
    CHECK(j["freq_map"].size() == 144);
    CHECK(j["region_means"].contains("corner"));
  }
}
