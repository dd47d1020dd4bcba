// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "rblock/gamma.hpp"
#include "rblock/rng.hpp"
#include "rblock/tensor.hpp"

namespace rblock {

enum class DropMethod {
  None,            // no mask (baseline)
  Dropout,         // element-wise
  SpatialDropout,  // whole channels
  DropBlock,       // square blocks, independent per channel
  RDropPair,       // two independent Dropout masks
  CDropPair,       // element-wise complementary pair at p = 0.5
  RSpatialPair,    // two independent SpatialDropout masks
  RDropBlockPair,  // two independent DropBlock masks
  BDropDML,        // shared block pattern, complementary channel split
  SDropDML,        // shared dropped channels, complementary block patterns
};

DropMethod parse_drop_method(std::string_view name);
std::string_view to_string(DropMethod method) noexcept;
bool is_pair_method(DropMethod method) noexcept;

struct DropSchedule {
  enum class Kind { Constant, LinearRamp };
  Kind kind = Kind::Constant;
  double target = 0.0;  // LinearRamp only

  // Constant: base_p. LinearRamp: target * epoch / total_epochs.
  double p_at(double base_p, std::size_t epoch, std::size_t total_epochs) const;
};

struct DropSpec {
  DropMethod method = DropMethod::BDropDML;
  double p = 0.2;
  std::size_t b_size = 3;
  GammaMode gamma_mode = GammaMode::Corrected;
  CenterRegion center_region = CenterRegion::Full;
  DropSchedule schedule;
  bool per_sample = false;  // one mask per sample instead of one per step

  void validate() const;
  double p_for_epoch(std::size_t epoch, std::size_t total_epochs) const {
    return schedule.p_at(p, epoch, total_epochs);
  }
};

// Feature-plane geometry of a mask: height m, width n, channels c.
struct MaskShape {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t c = 0;

  Shape4 tensor_shape() const noexcept { return {1, c, m, n}; }
  BlockGeometry geometry(std::size_t b_size) const noexcept { return {m, n, b_size}; }
};

// A normalized keep-mask: kept entries hold 1/s where s is the kept proportion.
struct KeepMask {
  Tensor4 keep;
  double scale = 1.0;
  std::size_t raw_drop_count = 0;
  bool degenerate = false;  // nothing was kept; replaced by the identity mask
};

struct MaskPair {
  Tensor4 keep1;
  Tensor4 keep2;
  double scale1 = 1.0;
  double scale2 = 1.0;
  std::size_t raw_drop_count1 = 0;
  std::size_t raw_drop_count2 = 0;
  bool degenerate1 = false;
  bool degenerate2 = false;

  std::size_t degenerate_count() const noexcept {
    return static_cast<std::size_t>(degenerate1) + static_cast<std::size_t>(degenerate2);
  }
};

// Binary m x n drop pattern (row-major): Bernoulli(gamma) centers expanded to
// clipped b x b squares.
std::vector<std::uint8_t> dropblock_pattern(const BlockGeometry& geom, double gamma, RngStream& rng,
                                            CenterRegion region = CenterRegion::Full);
// Expands an explicit center map (nonzero = center) into a drop pattern.
std::vector<std::uint8_t> expand_centers(const BlockGeometry& geom,
                                         std::span<const std::uint8_t> centers);

// Divides a binary keep-mask by its kept proportion. A mask that keeps
// nothing becomes the identity and is flagged degenerate.
KeepMask normalize_keep(Tensor4 binary_keep);

// Center probability used by the block-based samplers for spec.p.
double block_gamma(const DropSpec& spec, const BlockGeometry& geom);
// Center probability whose exact unit drop rate is 0.5; memoized per geometry.
// Planes too small for the closed form use the per-unit map mean.
double half_coverage_gamma(const BlockGeometry& geom);

MaskPair sample_bdropdml(const MaskShape& shape, const DropSpec& spec, RngStream& rng);
MaskPair sample_sdropdml(const MaskShape& shape, const DropSpec& spec, RngStream& rng);
// RDropPair, CDropPair, RSpatialPair, RDropBlockPair.
MaskPair sample_pair_baselines(const MaskShape& shape, const DropSpec& spec, RngStream& rng);
// None, Dropout, SpatialDropout, DropBlock.
KeepMask sample_single(const MaskShape& shape, const DropSpec& spec, RngStream& rng);
// Any pair method.
MaskPair sample_pair(const MaskShape& shape, const DropSpec& spec, RngStream& rng);

// keep must be (1, c, h, w) or match activations exactly.
Tensor4 apply_mask(const Tensor4& activations, const Tensor4& keep);
Tensor4 apply_mask_backward(const Tensor4& grad_out, const Tensor4& keep);

}  // namespace rblock
