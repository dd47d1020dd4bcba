// SPDX-License-Identifier: Apache-2.0
#include "rblock/gamma.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "rblock/error.hpp"

namespace rblock {
namespace {

constexpr std::uint64_t kTrialsPerChunk = 256;

void check_unit_interval(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw InvalidArgument(std::string(name) + " = " + std::to_string(v) + " outside [0, 1]");
  }
}

double survival(double gamma, double e) noexcept {
  if (e == 0.0 || gamma == 0.0) return 1.0;
  if (gamma == 1.0) return 0.0;
  return std::exp(e * std::log1p(-gamma));
}

// Half-open range of indices within distance k of i, clipped to [lo, hi).
struct Span1 {
  std::size_t begin;
  std::size_t end;
  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
};

Span1 center_window(std::size_t i, std::size_t k, std::size_t extent, CenterRegion region) {
  std::size_t lo = i >= k ? i - k : 0;
  std::size_t hi = std::min(extent, i + k + 1);
  if (region == CenterRegion::Valid) {
    lo = std::max(lo, k);
    hi = std::min(hi, extent >= k ? extent - k : 0);
  }
  return {lo, hi};
}

Span1 intersect(Span1 a, Span1 b) { return {std::max(a.begin, b.begin), std::min(a.end, b.end)}; }

struct ChunkCounts {
  std::vector<std::uint64_t> unit_counts;
  std::uint64_t dropped_sum = 0;
  std::uint64_t dropped_sq_sum = 0;
};

void run_chunk(double gamma, const BlockGeometry& geom, CenterRegion region,
               std::uint64_t trials, RngStream rng, ChunkCounts& out) {
  const std::size_t m = geom.m;
  const std::size_t n = geom.n;
  const std::size_t k = geom.k();
  out.unit_counts.assign(m * n, 0);
  std::vector<std::uint8_t> pattern(m * n);
  const std::size_t row_lo = region == CenterRegion::Valid ? k : 0;
  const std::size_t row_hi = region == CenterRegion::Valid ? (m >= k ? m - k : 0) : m;
  const std::size_t col_lo = region == CenterRegion::Valid ? k : 0;
  const std::size_t col_hi = region == CenterRegion::Valid ? (n >= k ? n - k : 0) : n;
  for (std::uint64_t t = 0; t < trials; ++t) {
    std::fill(pattern.begin(), pattern.end(), 0);
    // Every grid position consumes one draw, so the stream layout does not
    // depend on the region.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const bool center = rng.bernoulli(gamma);
        if (!center || i < row_lo || i >= row_hi || j < col_lo || j >= col_hi) continue;
        const std::size_t r0 = i >= k ? i - k : 0;
        const std::size_t r1 = std::min(m, i + k + 1);
        const std::size_t c0 = j >= k ? j - k : 0;
        const std::size_t c1 = std::min(n, j + k + 1);
        for (std::size_t r = r0; r < r1; ++r)
          std::fill(pattern.begin() + static_cast<std::ptrdiff_t>(r * n + c0),
                    pattern.begin() + static_cast<std::ptrdiff_t>(r * n + c1), 1);
      }
    }
    std::uint64_t dropped = 0;
    for (std::size_t u = 0; u < m * n; ++u) {
      out.unit_counts[u] += pattern[u];
      dropped += pattern[u];
    }
    out.dropped_sum += dropped;
    out.dropped_sq_sum += dropped * dropped;
  }
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void BlockGeometry::validate() const {
  if (b_size == 0 || b_size % 2 == 0) {
    throw InvalidArgument("b_size must be odd and >= 1, got " + std::to_string(b_size));
  }
  if (m == 0 || n == 0) throw InvalidArgument("plane dims must be >= 1, got " + str());
}

void BlockGeometry::validate_fits() const {
  validate();
  if (b_size > m || b_size > n) {
    throw InvalidArgument("b_size " + std::to_string(b_size) + " exceeds plane " + str());
  }
}

void BlockGeometry::require_exact() const {
  validate();
  if (!exact_formula_applies()) {
    throw GeometryError("exact p(gamma) requires m, n > 2*b_size; got " + str() +
                        " (use the Monte Carlo estimator for this geometry)");
  }
}

std::string BlockGeometry::str() const {
  return "m=" + std::to_string(m) + " n=" + std::to_string(n) + " b_size=" + std::to_string(b_size);
}

GammaMode parse_gamma_mode(std::string_view name) {
  if (name == "simple") return GammaMode::Simple;
  if (name == "corrected") return GammaMode::Corrected;
  if (name == "exact") return GammaMode::Exact;
  throw InvalidArgument("unknown gamma mode '" + std::string(name) +
                        "' (expected simple, corrected or exact)");
}

std::string_view to_string(GammaMode mode) noexcept {
  switch (mode) {
    case GammaMode::Simple: return "simple";
    case GammaMode::Corrected: return "corrected";
    case GammaMode::Exact: return "exact";
  }
  return "?";
}

CenterRegion parse_center_region(std::string_view name) {
  if (name == "full") return CenterRegion::Full;
  if (name == "valid") return CenterRegion::Valid;
  throw InvalidArgument("unknown center region '" + std::string(name) + "' (expected full or valid)");
}

std::string_view to_string(CenterRegion region) noexcept {
  return region == CenterRegion::Full ? "full" : "valid";
}

double one_minus_survival(double gamma, double e) noexcept {
  if (e == 0.0 || gamma == 0.0) return 0.0;
  if (gamma == 1.0) return 1.0;
  if (e == 1.0) return gamma;
  return -std::expm1(e * std::log1p(-gamma));
}

double gamma_simple(double p, std::size_t b_size) {
  check_unit_interval(p, "p");
  BlockGeometry{1, 1, b_size}.validate();
  const double b = static_cast<double>(b_size);
  return p / (b * b);
}

double gamma_corrected(double p, const BlockGeometry& geom) {
  check_unit_interval(p, "p");
  geom.validate_fits();
  const double m = static_cast<double>(geom.m);
  const double n = static_cast<double>(geom.n);
  const double b = static_cast<double>(geom.b_size);
  return std::min(1.0, p * m * n / (b * b * (m - b + 1.0) * (n - b + 1.0)));
}

double p_exact(double gamma, const BlockGeometry& geom) {
  check_unit_interval(gamma, "gamma");
  geom.require_exact();
  const double m = static_cast<double>(geom.m);
  const double n = static_cast<double>(geom.n);
  const std::size_t k = geom.k();
  const double kd = static_cast<double>(k);
  const double side = 2.0 * kd + 1.0;

  const double interior =
      (1.0 - 2.0 * kd / m) * (1.0 - 2.0 * kd / n) * one_minus_survival(gamma, side * side);

  // k^2 - sum (1-gamma)^((k+i)(k+j)) == sum [1 - (1-gamma)^((k+i)(k+j))]
  double corner_sum = 0.0;
  for (std::size_t i = 1; i <= k; ++i)
    for (std::size_t j = 1; j <= k; ++j)
      corner_sum += one_minus_survival(gamma, static_cast<double>((k + i) * (k + j)));
  const double corner = 4.0 * corner_sum / (m * n);

  // Finite-sum form of the geometric series; no 0/0 at gamma = 0.
  double edge_sum = 0.0;
  for (std::size_t j = 1; j <= k; ++j)
    edge_sum += one_minus_survival(gamma, side * static_cast<double>(k + j));
  const double edge = 2.0 * (1.0 / m + 1.0 / n - 4.0 * kd / (m * n)) * edge_sum;

  return interior + corner + edge;
}

double p_no_margin(double gamma, std::size_t b_size) {
  check_unit_interval(gamma, "gamma");
  BlockGeometry{1, 1, b_size}.validate();
  const double b = static_cast<double>(b_size);
  return one_minus_survival(gamma, b * b);
}

double p_valid_region(double gamma, const BlockGeometry& geom) {
  check_unit_interval(gamma, "gamma");
  geom.validate_fits();
  const double m = static_cast<double>(geom.m);
  const double n = static_cast<double>(geom.n);
  const double b = static_cast<double>(geom.b_size);
  return (m - b + 1.0) * (n - b + 1.0) * one_minus_survival(gamma, b * b) / (m * n);
}

double solve_gamma_exact(double p_target, const BlockGeometry& geom, double tol) {
  check_unit_interval(p_target, "p");
  geom.require_exact();
  if (!(tol > 0.0)) throw InvalidArgument("tol must be > 0");
  if (p_target == 0.0) return 0.0;
  if (p_target == 1.0) return 1.0;

  double lo = 0.0;
  double hi = 1.0;
  for (double seed : {gamma_simple(p_target, geom.b_size), gamma_corrected(p_target, geom)}) {
    seed = std::clamp(seed, 0.0, 1.0);
    const double f = p_exact(seed, geom);
    if (std::abs(f - p_target) <= tol) return seed;
    if (f < p_target)
      lo = std::max(lo, seed);
    else
      hi = std::min(hi, seed);
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double f = p_exact(mid, geom);
    if (std::abs(f - p_target) <= tol) return mid;
    if (f < p_target)
      lo = mid;
    else
      hi = mid;
  }
  throw NumericalError("solve_gamma_exact: no convergence to tol " + std::to_string(tol) +
                       " for p=" + std::to_string(p_target) + " at " + geom.str());
}

double gamma_for(double p, const BlockGeometry& geom, GammaMode mode) {
  switch (mode) {
    case GammaMode::Simple: return gamma_simple(p, geom.b_size);
    case GammaMode::Corrected: return gamma_corrected(p, geom);
    case GammaMode::Exact: return solve_gamma_exact(p, geom, 1e-12);
  }
  throw InvalidArgument("invalid gamma mode");
}

RegionExpectation region_expected_drops(double gamma, const BlockGeometry& geom) {
  check_unit_interval(gamma, "gamma");
  geom.require_exact();
  const std::size_t k = geom.k();
  const double side = static_cast<double>(2 * k + 1);
  RegionExpectation e;
  e.interior = static_cast<double>((geom.m - 2 * k) * (geom.n - 2 * k)) *
               one_minus_survival(gamma, side * side);
  for (std::size_t i = 1; i <= k; ++i)
    for (std::size_t j = 1; j <= k; ++j)
      e.corner += 4.0 * one_minus_survival(gamma, static_cast<double>((k + i) * (k + j)));
  double strip = 0.0;
  for (std::size_t j = 1; j <= k; ++j) strip += one_minus_survival(gamma, side * static_cast<double>(k + j));
  e.edge = 2.0 * static_cast<double>(geom.m + geom.n - 4 * k) * strip;
  return e;
}

UnitRegion classify_unit(const BlockGeometry& geom, std::size_t i, std::size_t j) noexcept {
  const std::size_t k = geom.k();
  const bool row_border = i < k || i + k >= geom.m;
  const bool col_border = j < k || j + k >= geom.n;
  if (row_border && col_border) return UnitRegion::Corner;
  if (row_border || col_border) return UnitRegion::Edge;
  return UnitRegion::Interior;
}

std::vector<double> unit_drop_probability_map(double gamma, const BlockGeometry& geom,
                                              CenterRegion region) {
  check_unit_interval(gamma, "gamma");
  geom.validate();
  const std::size_t k = geom.k();
  std::vector<double> map(geom.m * geom.n);
  for (std::size_t i = 0; i < geom.m; ++i) {
    const std::size_t rows = center_window(i, k, geom.m, region).size();
    for (std::size_t j = 0; j < geom.n; ++j) {
      const std::size_t cols = center_window(j, k, geom.n, region).size();
      map[i * geom.n + j] = one_minus_survival(gamma, static_cast<double>(rows * cols));
    }
  }
  return map;
}

double drop_count_variance(double gamma, const BlockGeometry& geom, CenterRegion region) {
  check_unit_interval(gamma, "gamma");
  geom.validate();
  const std::size_t m = geom.m;
  const std::size_t n = geom.n;
  const std::size_t k = geom.k();
  std::vector<Span1> rows(m);
  std::vector<Span1> cols(n);
  for (std::size_t i = 0; i < m; ++i) rows[i] = center_window(i, k, m, region);
  for (std::size_t j = 0; j < n; ++j) cols[j] = center_window(j, k, n, region);

  double var = 0.0;
  for (std::size_t i1 = 0; i1 < m; ++i1)
    for (std::size_t j1 = 0; j1 < n; ++j1) {
      const double a = static_cast<double>(rows[i1].size() * cols[j1].size());
      const std::size_t i_lo = i1 >= 2 * k ? i1 - 2 * k : 0;
      const std::size_t i_hi = std::min(m, i1 + 2 * k + 1);
      const std::size_t j_lo = j1 >= 2 * k ? j1 - 2 * k : 0;
      const std::size_t j_hi = std::min(n, j1 + 2 * k + 1);
      for (std::size_t i2 = i_lo; i2 < i_hi; ++i2)
        for (std::size_t j2 = j_lo; j2 < j_hi; ++j2) {
          const double b = static_cast<double>(rows[i2].size() * cols[j2].size());
          const double shared = static_cast<double>(intersect(rows[i1], rows[i2]).size() *
                                                    intersect(cols[j1], cols[j2]).size());
          var += survival(gamma, a + b - shared) - survival(gamma, a) * survival(gamma, b);
        }
    }
  return std::max(var, 0.0);
}

MaskStatsReport mc_drop_rate(double gamma, const BlockGeometry& geom, std::uint64_t trials,
                             const RngStream& rng, CenterRegion region, unsigned threads) {
  check_unit_interval(gamma, "gamma");
  geom.validate();
  if (trials == 0) throw InvalidArgument("mc_drop_rate: trials must be >= 1");

  const std::uint64_t chunks = (trials + kTrialsPerChunk - 1) / kTrialsPerChunk;
  std::vector<ChunkCounts> results(chunks);
  auto work = [&](std::uint64_t first, std::uint64_t stride) {
    for (std::uint64_t c = first; c < chunks; c += stride) {
      const std::uint64_t count = std::min(kTrialsPerChunk, trials - c * kTrialsPerChunk);
      run_chunk(gamma, geom, region, count, rng.split(c), results[c]);
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }

  const std::size_t units = geom.m * geom.n;
  std::vector<std::uint64_t> counts(units, 0);
  std::uint64_t dropped_sum = 0;
  std::uint64_t dropped_sq_sum = 0;
  for (const auto& r : results) {
    for (std::size_t u = 0; u < units; ++u) counts[u] += r.unit_counts[u];
    dropped_sum += r.dropped_sum;
    dropped_sq_sum += r.dropped_sq_sum;
  }

  MaskStatsReport rep;
  rep.gamma = gamma;
  rep.geometry = geom;
  rep.center_region = region;
  rep.trials = trials;
  rep.freq_map.resize(units);
  const double t = static_cast<double>(trials);
  for (std::size_t u = 0; u < units; ++u) rep.freq_map[u] = static_cast<double>(counts[u]) / t;
  const double total_units = static_cast<double>(units);
  rep.empirical_p = static_cast<double>(dropped_sum) / (t * total_units);

  double sums[3] = {0, 0, 0};
  std::size_t cnt[3] = {0, 0, 0};
  for (std::size_t i = 0; i < geom.m; ++i)
    for (std::size_t j = 0; j < geom.n; ++j) {
      const auto r = static_cast<int>(classify_unit(geom, i, j));
      sums[r] += rep.freq_map[i * geom.n + j];
      ++cnt[r];
    }
  auto region_mean = [&](UnitRegion r) -> std::optional<double> {
    const auto idx = static_cast<int>(r);
    if (cnt[idx] == 0) return std::nullopt;
    return sums[idx] / static_cast<double>(cnt[idx]);
  };
  rep.region_means = {region_mean(UnitRegion::Interior), region_mean(UnitRegion::Corner),
                      region_mean(UnitRegion::Edge)};

  if (region == CenterRegion::Full && geom.exact_formula_applies()) {
    rep.analytic_p = p_exact(gamma, geom);
  } else if (region == CenterRegion::Valid) {
    const auto map = unit_drop_probability_map(gamma, geom, region);
    double acc = 0.0;
    for (double v : map) acc += v;
    rep.analytic_p = acc / total_units;
  }
  if (rep.analytic_p) {
    rep.abs_deviation = std::abs(rep.empirical_p - *rep.analytic_p);
    const double p = *rep.analytic_p;
    rep.sigma_binomial = std::sqrt(p * (1.0 - p) / (total_units * t));
  } else {
    const double p = rep.empirical_p;
    rep.sigma_binomial = std::sqrt(p * (1.0 - p) / (total_units * t));
  }
  rep.sigma_exact = std::sqrt(drop_count_variance(gamma, geom, region) / t) / total_units;

  const double mean_count = static_cast<double>(dropped_sum) / t;
  const double var_count =
      trials > 1 ? (static_cast<double>(dropped_sq_sum) - t * mean_count * mean_count) / (t - 1.0) : 0.0;
  rep.sigma_empirical = std::sqrt(std::max(var_count, 0.0) / t) / total_units;
  return rep;
}

std::string report_to_json(const MaskStatsReport& r, int indent) {
  nlohmann::json j;
  j["gamma"] = r.gamma;
  j["geometry"] = {{"m", r.geometry.m}, {"n", r.geometry.n}, {"b_size", r.geometry.b_size}};
  j["center_region"] = std::string(to_string(r.center_region));
  j["trials"] = r.trials;
  j["analytic_p"] = optional_json(r.analytic_p);
  j["empirical_p"] = r.empirical_p;
  j["abs_deviation"] = optional_json(r.abs_deviation);
  j["sigma_binomial"] = r.sigma_binomial;
  j["sigma_exact"] = r.sigma_exact;
  j["sigma_empirical"] = r.sigma_empirical;
  j["region_means"] = {{"interior", optional_json(r.region_means.interior)},
                       {"corner", optional_json(r.region_means.corner)},
                       {"edge", optional_json(r.region_means.edge)}};
  j["freq_map"] = r.freq_map;
  return j.dump(indent);
}

}  // namespace rblock
