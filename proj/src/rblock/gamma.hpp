// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rblock/rng.hpp"

namespace rblock {

/// Spatial geometry of one feature plane and the square drop block.
///
/// b_size must be odd (b_size = 2k + 1). The closed-form unit drop rate
/// additionally needs m > 2 b_size and n > 2 b_size; below that the Monte
/// Carlo estimator is the only supported route.
struct BlockGeometry {
  std::size_t m = 0;  // height
  std::size_t n = 0;  // width
  std::size_t b_size = 1;

  std::size_t k() const noexcept { return (b_size - 1) / 2; }
  // b_size odd and >= 1, m and n >= 1.
  void validate() const;
  // validate() plus b_size <= min(m, n).
  void validate_fits() const;
  bool exact_formula_applies() const noexcept { return m > 2 * b_size && n > 2 * b_size; }
  // Throws GeometryError when exact_formula_applies() is false.
  void require_exact() const;
  std::string str() const;
};

enum class GammaMode { Simple, Corrected, Exact };

// Where block centers may be sampled: the whole plane (blocks clipped at the
// border) or only where the full block fits inside the plane.
enum class CenterRegion { Full, Valid };

GammaMode parse_gamma_mode(std::string_view name);
std::string_view to_string(GammaMode mode) noexcept;
CenterRegion parse_center_region(std::string_view name);
std::string_view to_string(CenterRegion region) noexcept;

// 1 - (1 - gamma)^e, evaluated through log1p/expm1.
double one_minus_survival(double gamma, double e) noexcept;

// gamma = p / b^2 (block overlap and borders ignored).
double gamma_simple(double p, std::size_t b_size);
// gamma = p m n / (b^2 (m - b + 1)(n - b + 1)).
double gamma_corrected(double p, const BlockGeometry& geom);
// Exact unit drop probability for center probability gamma, centers over the
// full plane with border clipping. Requires geom.exact_formula_applies().
double p_exact(double gamma, const BlockGeometry& geom);
// 1 - (1 - gamma)^(b^2): a unit whose neighbourhood is never clipped.
double p_no_margin(double gamma, std::size_t b_size);
// (m - b + 1)(n - b + 1)(1 - (1 - gamma)^(b^2)) / (m n).
double p_valid_region(double gamma, const BlockGeometry& geom);
// Bisection for gamma with |p_exact(gamma) - p_target| <= tol. The bracket is
// first narrowed with gamma_simple and gamma_corrected.
double solve_gamma_exact(double p_target, const BlockGeometry& geom, double tol = 1e-12);
// Center probability for a per-unit target p under the chosen mode.
double gamma_for(double p, const BlockGeometry& geom, GammaMode mode);

// Expected number of dropped units per region of the plane: the interior
// (units never clipped), the four k x k corners, and the four edge strips.
struct RegionExpectation {
  double interior = 0.0;
  double corner = 0.0;
  double edge = 0.0;
  double total() const noexcept { return interior + corner + edge; }
};
RegionExpectation region_expected_drops(double gamma, const BlockGeometry& geom);

enum class UnitRegion { Interior, Corner, Edge };
UnitRegion classify_unit(const BlockGeometry& geom, std::size_t i, std::size_t j) noexcept;

// Per-unit drop probability 1 - (1 - gamma)^(#centers whose block covers the
// unit), row-major m x n. Exact for any geometry and either center region.
std::vector<double> unit_drop_probability_map(double gamma, const BlockGeometry& geom,
                                              CenterRegion region = CenterRegion::Full);
// Exact variance of the number of dropped units in one pattern, summing the
// pairwise covariances of overlapping neighbourhoods.
double drop_count_variance(double gamma, const BlockGeometry& geom,
                           CenterRegion region = CenterRegion::Full);

struct RegionMeans {
  std::optional<double> interior;
  std::optional<double> corner;
  std::optional<double> edge;
};

struct MaskStatsReport {
  double gamma = 0.0;
  BlockGeometry geometry;
  CenterRegion center_region = CenterRegion::Full;
  std::uint64_t trials = 0;
  std::vector<double> freq_map;  // row-major m x n, fraction of trials each unit was dropped
  double empirical_p = 0.0;      // mean of freq_map
  RegionMeans region_means;
  std::optional<double> analytic_p;
  std::optional<double> abs_deviation;
  double sigma_binomial = 0.0;   // sqrt(p (1 - p) / (m n trials)), units treated as independent
  double sigma_exact = 0.0;      // from drop_count_variance, accounts for block correlation
  double sigma_empirical = 0.0;  // sample std of per-trial drop fraction / sqrt(trials)
};

/// Monte Carlo estimate of per-unit drop frequencies.
///
/// Each trial samples centers Bernoulli(gamma) over the center region and
/// expands each into a clipped b x b block. Trials are split into fixed-size
/// chunks, chunk c drawing from rng.split(c), so the result does not depend on
/// `threads`.
MaskStatsReport mc_drop_rate(double gamma, const BlockGeometry& geom, std::uint64_t trials,
                             const RngStream& rng, CenterRegion region = CenterRegion::Full,
                             unsigned threads = 1);

std::string report_to_json(const MaskStatsReport& report, int indent = -1);

}  // namespace rblock
