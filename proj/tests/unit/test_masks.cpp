// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "rblock/error.hpp"
#include "rblock/masks.hpp"

using namespace rblock;

namespace {

DropSpec spec_for(DropMethod method, double p, std::size_t b = 3) {
  DropSpec s;
  s.method = method;
  s.p = p;
  s.b_size = b;
  return s;
}

double mean_of(const Tensor4& t) {
  return std::accumulate(t.data().begin(), t.data().end(), 0.0) / static_cast<double>(t.size());
}

bool same_values(const Tensor4& a, const Tensor4& b) { return a == b; }

// Checks the complementarity invariants of one pair: nothing is dropped by
// both masks, and the union of drops is `expected_union`.
bool complementary(const MaskPair& pair, const std::vector<std::uint8_t>& expected_union) {
  if (pair.degenerate1 || pair.degenerate2) return true;
  for (std::size_t i = 0; i < pair.keep1.size(); ++i) {
    const bool d1 = pair.keep1[i] == 0.0;
    const bool d2 = pair.keep2[i] == 0.0;
    if (d1 && d2) return false;
    if ((d1 || d2) != (expected_union[i] != 0)) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("mask_sampling") {
  TEST_CASE("method names") {
    for (auto m : {DropMethod::None, DropMethod::Dropout, DropMethod::SpatialDropout, DropMethod::DropBlock,
                   DropMethod::RDropPair, DropMethod::CDropPair, DropMethod::RSpatialPair,
                   DropMethod::RDropBlockPair, DropMethod::BDropDML, DropMethod::SDropDML}) {
      CHECK(parse_drop_method(to_string(m)) == m);
    }
    CHECK(parse_drop_method("baseline") == DropMethod::None);
    CHECK_THROWS_AS(parse_drop_method("zoneout"), InvalidArgument);
    CHECK(is_pair_method(DropMethod::BDropDML));
    CHECK_FALSE(is_pair_method(DropMethod::DropBlock));
  }

  TEST_CASE("spec validation") {
    CHECK_NOTHROW(spec_for(DropMethod::BDropDML, 0.2).validate());
    CHECK_THROWS_AS(spec_for(DropMethod::BDropDML, 1.0).validate(), InvalidArgument);
    CHECK_THROWS_AS(spec_for(DropMethod::BDropDML, -0.1).validate(), InvalidArgument);
    CHECK_THROWS_AS(spec_for(DropMethod::BDropDML, 0.2, 4).validate(), InvalidArgument);
    CHECK_THROWS_AS(spec_for(DropMethod::CDropPair, 0.3).validate(), InvalidArgument);
    CHECK_NOTHROW(spec_for(DropMethod::CDropPair, 0.5).validate());
  }

  TEST_CASE("expand_centers places clipped squares") {
    const BlockGeometry geom{5, 5, 3};
    std::vector<std::uint8_t> centers(25, 0);
    centers[0] = 1;
    auto pat = expand_centers(geom, centers);
    CHECK(std::accumulate(pat.begin(), pat.end(), 0) == 4);
    CHECK(pat[0] == 1);
    CHECK(pat[1] == 1);
    CHECK(pat[5] == 1);
    CHECK(pat[6] == 1);
    centers[0] = 0;
    centers[12] = 1;
    pat = expand_centers(geom, centers);
    CHECK(std::accumulate(pat.begin(), pat.end(), 0) == 9);
    CHECK(pat[0] == 0);
    CHECK(pat[6] == 1);
    CHECK(pat[18] == 1);
    CHECK_THROWS_AS(expand_centers(geom, std::vector<std::uint8_t>(24, 0)), ShapeError);
  }

  TEST_CASE("dropblock_pattern edge gammas and center region") {
    RngStream rng(3, 0);
    const BlockGeometry geom{9, 9, 3};
    auto none = dropblock_pattern(geom, 0.0, rng);
    CHECK(std::accumulate(none.begin(), none.end(), 0) == 0);
    auto all = dropblock_pattern(geom, 1.0, rng);
    CHECK(std::accumulate(all.begin(), all.end(), 0) == 81);
    auto valid = dropblock_pattern({9, 9, 5}, 1.0, rng, CenterRegion::Valid);
    CHECK(std::accumulate(valid.begin(), valid.end(), 0) == 81);
    auto valid7 = dropblock_pattern({9, 9, 7}, 0.0, rng, CenterRegion::Valid);
    CHECK(std::accumulate(valid7.begin(), valid7.end(), 0) == 0);
    CHECK_THROWS_AS(dropblock_pattern(geom, 1.2, rng), InvalidArgument);
  }

  TEST_CASE("normalize_keep") {
    Tensor4 t({1, 1, 2, 2}, std::vector<double>{1, 0, 1, 1});
    auto k = normalize_keep(t);
    CHECK(k.scale == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(k.raw_drop_count == 1);
    CHECK_FALSE(k.degenerate);
    CHECK(k.keep[1] == 0.0);
    CHECK(std::fabs(mean_of(k.keep) - 1.0) <= 1e-12);

    auto dead = normalize_keep(Tensor4({1, 2, 2, 2}, 0.0));
    CHECK(dead.degenerate);
    CHECK(dead.raw_drop_count == 8);
    CHECK(dead.scale == 1.0);
    for (double v : dead.keep.data()) CHECK(v == 1.0);

    auto full = normalize_keep(Tensor4({1, 2, 2, 2}, 1.0));
    CHECK(full.scale == 1.0);
    CHECK(full.raw_drop_count == 0);
  }

  TEST_CASE("complementarity: bdropdml and sdropdml") {
    const MaskShape shape{12, 12, 6};
    const BlockGeometry geom = shape.geometry(3);
    RngStream rng(11, 0);
    std::size_t violations = 0;
    std::size_t bad_mean = 0;
    for (int draw = 0; draw < 2000; ++draw) {
      // BDropDML: a replay stream regenerates the shared pattern for the union.
      const DropSpec bspec = spec_for(DropMethod::BDropDML, 0.2);
      RngStream replay = rng;
      const auto pattern = dropblock_pattern(geom, block_gamma(bspec, geom), replay);
      const auto b = sample_bdropdml(shape, bspec, rng);
      std::vector<std::uint8_t> bunion(shape.m * shape.n * shape.c);
      for (std::size_t c = 0; c < shape.c; ++c)
        for (std::size_t u = 0; u < geom.m * geom.n; ++u) bunion[c * geom.m * geom.n + u] = pattern[u];
      if (!complementary(b, bunion)) ++violations;

      const DropSpec sspec = spec_for(DropMethod::SDropDML, 0.3);
      RngStream sreplay = rng;
      std::vector<std::uint8_t> dropped(shape.c);
      for (auto& d : dropped) d = sreplay.bernoulli(0.3) ? 1 : 0;
      const auto s = sample_sdropdml(shape, sspec, rng);
      std::vector<std::uint8_t> sunion(shape.m * shape.n * shape.c);
      for (std::size_t c = 0; c < shape.c; ++c)
        for (std::size_t u = 0; u < geom.m * geom.n; ++u) sunion[c * geom.m * geom.n + u] = dropped[c];
      if (!complementary(s, sunion)) ++violations;

      for (const Tensor4* k : {&b.keep1, &b.keep2, &s.keep1, &s.keep2})
        if (std::fabs(mean_of(*k) - 1.0) > 1e-12) ++bad_mean;
    }
    CHECK(violations == 0);
    CHECK(bad_mean == 0);
  }

  TEST_CASE("bdropdml channel split is exclusive") {
    const MaskShape shape{10, 10, 16};
    RngStream rng(4, 0);
    const auto pair = sample_bdropdml(shape, spec_for(DropMethod::BDropDML, 0.3), rng);
    for (std::size_t c = 0; c < shape.c; ++c) {
      const auto p1 = pair.keep1.plane(0, c);
      const auto p2 = pair.keep2.plane(0, c);
      const bool hit1 = std::any_of(p1.begin(), p1.end(), [](double v) { return v == 0.0; });
      const bool hit2 = std::any_of(p2.begin(), p2.end(), [](double v) { return v == 0.0; });
      CHECK_FALSE((hit1 && hit2));
    }
  }

  TEST_CASE("sdropdml half coverage calibration") {
    const MaskShape shape{32, 32, 4};
    const BlockGeometry geom = shape.geometry(3);
    const double g = half_coverage_gamma(geom);
    CHECK(std::fabs(p_exact(g, geom) - 0.5) <= 1e-12);
    CHECK(half_coverage_gamma(geom) == g);
    const BlockGeometry small{4, 5, 3};
    const auto map = unit_drop_probability_map(half_coverage_gamma(small), small);
    CHECK(std::fabs(std::accumulate(map.begin(), map.end(), 0.0) / 20.0 - 0.5) <= 1e-12);

    RngStream rng(8, 0);
    double frac_sum = 0.0;
    std::size_t channels = 0;
    const DropSpec spec = spec_for(DropMethod::SDropDML, 0.5);
    for (int draw = 0; draw < 3000; ++draw) {
      const auto pair = sample_sdropdml(shape, spec, rng);
      if (pair.degenerate1 || pair.degenerate2) continue;
      for (std::size_t c = 0; c < shape.c; ++c) {
        const auto p1 = pair.keep1.plane(0, c);
        const auto p2 = pair.keep2.plane(0, c);
        std::size_t d1 = 0, d2 = 0;
        for (std::size_t u = 0; u < p1.size(); ++u) {
          d1 += p1[u] == 0.0;
          d2 += p2[u] == 0.0;
        }
        if (d1 + d2 == 0) continue;
        REQUIRE(d1 + d2 == p1.size());
        frac_sum += static_cast<double>(d1) / static_cast<double>(p1.size());
        ++channels;
      }
    }
    REQUIRE(channels > 1000);
    CHECK(std::fabs(frac_sum / static_cast<double>(channels) - 0.5) <= 0.015);
  }

  TEST_CASE("baselines: marginal drop rates") {
    const MaskShape shape{16, 16, 8};
    RngStream rng(5, 0);
    double d_rdrop = 0.0, d_rspatial = 0.0;
    const int draws = 300;
    for (int i = 0; i < draws; ++i) {
      const auto r = sample_pair_baselines(shape, spec_for(DropMethod::RDropPair, 0.4), rng);
      for (double v : r.keep1.data()) d_rdrop += v == 0.0;
      const auto s = sample_pair_baselines(shape, spec_for(DropMethod::RSpatialPair, 0.25), rng);
      for (double v : s.keep2.data()) d_rspatial += v == 0.0;
    }
    const double units = static_cast<double>(draws) * 16 * 16 * 8;
    CHECK(std::fabs(d_rdrop / units - 0.4) <= 0.01);
    CHECK(std::fabs(d_rspatial / units - 0.25) <= 0.05);

    const auto c = sample_pair_baselines(shape, spec_for(DropMethod::CDropPair, 0.5), rng);
    for (std::size_t i = 0; i < c.keep1.size(); ++i) CHECK(((c.keep1[i] == 0.0) != (c.keep2[i] == 0.0)));

    const auto s = sample_pair_baselines(shape, spec_for(DropMethod::RSpatialPair, 0.5), rng);
    for (std::size_t ch = 0; ch < shape.c; ++ch) {
      const auto pl = s.keep1.plane(0, ch);
      CHECK(std::all_of(pl.begin(), pl.end(), [&](double v) { return v == pl[0]; }));
    }
    CHECK_THROWS_AS(sample_pair_baselines(shape, spec_for(DropMethod::BDropDML, 0.2), rng), InvalidArgument);
  }

  TEST_CASE("single masks and p = 0") {
    const MaskShape shape{8, 8, 4};
    RngStream rng(6, 0);
    for (auto m : {DropMethod::None, DropMethod::Dropout, DropMethod::SpatialDropout, DropMethod::DropBlock}) {
      const auto k = sample_single(shape, spec_for(m, 0.0), rng);
      for (double v : k.keep.data()) CHECK(v == 1.0);
    }
    for (auto m : {DropMethod::RDropPair, DropMethod::RSpatialPair, DropMethod::RDropBlockPair,
                   DropMethod::BDropDML}) {
      const auto pair = sample_pair(shape, spec_for(m, 0.0), rng);
      for (double v : pair.keep1.data()) CHECK(v == 1.0);
      for (double v : pair.keep2.data()) CHECK(v == 1.0);
    }
    CHECK_THROWS_AS(sample_single(shape, spec_for(DropMethod::BDropDML, 0.2), rng), InvalidArgument);
    CHECK_THROWS_AS(sample_single({0, 8, 4}, spec_for(DropMethod::Dropout, 0.2), rng), InvalidArgument);
  }

  TEST_CASE("degenerate pair becomes identity") {
    // A single 1x1 plane with the center always hit drops everything.
    const MaskShape shape{1, 1, 1};
    RngStream rng(1, 0);
    DropSpec spec = spec_for(DropMethod::RDropPair, 0.999999);
    std::size_t degenerate = 0;
    for (int i = 0; i < 50; ++i) {
      const auto pair = sample_pair(shape, spec, rng);
      degenerate += pair.degenerate_count();
      CHECK(pair.keep1[0] == doctest::Approx(1.0));
    }
    CHECK(degenerate > 90);
  }

  TEST_CASE("seeded sampling is reproducible") {
    const MaskShape shape{12, 12, 4};
    for (auto m : {DropMethod::BDropDML, DropMethod::SDropDML, DropMethod::RDropBlockPair}) {
      RngStream a(42, 0), b(42, 0);
      const auto pa = sample_pair(shape, spec_for(m, 0.2), a);
      const auto pb = sample_pair(shape, spec_for(m, 0.2), b);
      CHECK(same_values(pa.keep1, pb.keep1));
      CHECK(same_values(pa.keep2, pb.keep2));
    }
  }

  TEST_CASE("schedules") {
    DropSpec s = spec_for(DropMethod::BDropDML, 0.2);
    CHECK(s.p_for_epoch(0, 200) == 0.2);
    CHECK(s.p_for_epoch(150, 200) == 0.2);
    s.schedule.kind = DropSchedule::Kind::LinearRamp;
    s.schedule.target = 0.2;
    CHECK(s.p_for_epoch(0, 200) == 0.0);
    CHECK(s.p_for_epoch(100, 200) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.p_for_epoch(200, 200) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(s.p_for_epoch(1, 0), InvalidArgument);
    s.schedule.target = 1.0;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
  }

  TEST_CASE("apply_mask broadcast and backward") {
    Tensor4 x({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 4});
    Tensor4 keep({1, 1, 1, 2}, std::vector<double>{2, 0});
    const Tensor4 y = apply_mask(x, keep);
    CHECK(y[0] == 2.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 6.0);
    CHECK(y[3] == 0.0);
    Tensor4 per({2, 1, 1, 2}, std::vector<double>{1, 0, 0, 1});
    const Tensor4 z = apply_mask(x, per);
    CHECK(z[0] == 1.0);
    CHECK(z[1] == 0.0);
    CHECK(z[3] == 4.0);
    // Linear in x: backward is the same elementwise product.
    const Tensor4 g = apply_mask_backward(Tensor4({2, 1, 1, 2}, 1.0), keep);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 0.0);
    CHECK_THROWS_AS(apply_mask(x, Tensor4({1, 2, 1, 2}, 1.0)), ShapeError);
    CHECK_THROWS_AS(apply_mask(x, Tensor4({3, 1, 1, 2}, 1.0)), ShapeError);
  }
}
