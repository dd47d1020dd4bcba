// SPDX-License-Identifier: Apache-2.0
#include "rblock/masks.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "rblock/error.hpp"

namespace rblock {
namespace {

MaskPair make_pair(KeepMask a, KeepMask b) {
  MaskPair pair;
  pair.keep1 = std::move(a.keep);
  pair.keep2 = std::move(b.keep);
  pair.scale1 = a.scale;
  pair.scale2 = b.scale;
  pair.raw_drop_count1 = a.raw_drop_count;
  pair.raw_drop_count2 = b.raw_drop_count;
  pair.degenerate1 = a.degenerate;
  pair.degenerate2 = b.degenerate;
  return pair;
}

void require_method(const DropSpec& spec, std::initializer_list<DropMethod> allowed,
                    const char* sampler) {
  if (std::find(allowed.begin(), allowed.end(), spec.method) == allowed.end()) {
    throw InvalidArgument(std::string(sampler) + " cannot sample method '" +
                          std::string(to_string(spec.method)) + "'");
  }
}

void check_shape(const MaskShape& shape) {
  if (shape.m == 0 || shape.n == 0 || shape.c == 0) {
    throw InvalidArgument("mask shape dims must be >= 1");
  }
}

// Binary keep-mask dropping each unit of the block pattern independently per channel.
Tensor4 dropblock_keep(const MaskShape& shape, const DropSpec& spec, RngStream& rng) {
  const BlockGeometry geom = shape.geometry(spec.b_size);
  const double gamma = block_gamma(spec, geom);
  Tensor4 keep(shape.tensor_shape(), 1.0);
  for (std::size_t c = 0; c < shape.c; ++c) {
    const auto pattern = dropblock_pattern(geom, gamma, rng, spec.center_region);
    auto plane = keep.plane(0, c);
    for (std::size_t u = 0; u < plane.size(); ++u) plane[u] = pattern[u] ? 0.0 : 1.0;
  }
  return keep;
}

Tensor4 dropout_keep(const MaskShape& shape, double p, RngStream& rng) {
  Tensor4 keep(shape.tensor_shape(), 1.0);
  for (auto& v : keep.data()) v = rng.bernoulli(p) ? 0.0 : 1.0;
  return keep;
}

Tensor4 spatial_keep(const MaskShape& shape, double p, RngStream& rng) {
  Tensor4 keep(shape.tensor_shape(), 1.0);
  for (std::size_t c = 0; c < shape.c; ++c) {
    if (rng.bernoulli(p)) std::ranges::fill(keep.plane(0, c), 0.0);
  }
  return keep;
}

}  // namespace

DropMethod parse_drop_method(std::string_view name) {
  static const std::pair<std::string_view, DropMethod> kNames[] = {
      {"none", DropMethod::None},
      {"baseline", DropMethod::None},
      {"dropout", DropMethod::Dropout},
      {"spatial_dropout", DropMethod::SpatialDropout},
      {"dropblock", DropMethod::DropBlock},
      {"rdrop", DropMethod::RDropPair},
      {"cdrop", DropMethod::CDropPair},
      {"rspatial", DropMethod::RSpatialPair},
      {"rdropblock", DropMethod::RDropBlockPair},
      {"bdropdml", DropMethod::BDropDML},
      {"sdropdml", DropMethod::SDropDML},
  };
  for (const auto& [key, method] : kNames)
    if (key == name) return method;
  throw InvalidArgument("unknown drop method '" + std::string(name) + "'");
}

std::string_view to_string(DropMethod method) noexcept {
  switch (method) {
    case DropMethod::None: return "none";
    case DropMethod::Dropout: return "dropout";
    case DropMethod::SpatialDropout: return "spatial_dropout";
    case DropMethod::DropBlock: return "dropblock";
    case DropMethod::RDropPair: return "rdrop";
    case DropMethod::CDropPair: return "cdrop";
    case DropMethod::RSpatialPair: return "rspatial";
    case DropMethod::RDropBlockPair: return "rdropblock";
    case DropMethod::BDropDML: return "bdropdml";
    case DropMethod::SDropDML: return "sdropdml";
  }
  return "?";
}

bool is_pair_method(DropMethod method) noexcept {
  switch (method) {
    case DropMethod::RDropPair:
    case DropMethod::CDropPair:
    case DropMethod::RSpatialPair:
    case DropMethod::RDropBlockPair:
    case DropMethod::BDropDML:
    case DropMethod::SDropDML:
      return true;
    default:
      return false;
  }
}

double DropSchedule::p_at(double base_p, std::size_t epoch, std::size_t total_epochs) const {
  if (kind == Kind::Constant) return base_p;
  if (total_epochs == 0) throw InvalidArgument("linear_ramp needs total_epochs >= 1");
  return target * static_cast<double>(epoch) / static_cast<double>(total_epochs);
}

void DropSpec::validate() const {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("p must be in [0, 1), got " + std::to_string(p));
  if (b_size == 0 || b_size % 2 == 0) {
    throw InvalidArgument("b_size must be odd and >= 1, got " + std::to_string(b_size));
  }
  if (method == DropMethod::CDropPair && p != 0.5) {
    throw InvalidArgument("cdrop is defined only for p = 0.5, got " + std::to_string(p));
  }
  if (schedule.kind == DropSchedule::Kind::LinearRamp && !(schedule.target >= 0.0 && schedule.target < 1.0)) {
    throw InvalidArgument("linear_ramp target must be in [0, 1)");
  }
}

std::vector<std::uint8_t> expand_centers(const BlockGeometry& geom,
                                         std::span<const std::uint8_t> centers) {
  geom.validate();
  if (centers.size() != geom.m * geom.n) {
    throw ShapeError("expand_centers: center map has " + std::to_string(centers.size()) +
                     " entries, plane " + geom.str() + " needs " + std::to_string(geom.m * geom.n));
  }
  const std::size_t k = geom.k();
  std::vector<std::uint8_t> pattern(geom.m * geom.n, 0);
  for (std::size_t i = 0; i < geom.m; ++i)
    for (std::size_t j = 0; j < geom.n; ++j) {
      if (!centers[i * geom.n + j]) continue;
      const std::size_t r1 = std::min(geom.m, i + k + 1);
      const std::size_t c0 = j >= k ? j - k : 0;
      const std::size_t c1 = std::min(geom.n, j + k + 1);
      for (std::size_t r = i >= k ? i - k : 0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) pattern[r * geom.n + c] = 1;
    }
  return pattern;
}

std::vector<std::uint8_t> dropblock_pattern(const BlockGeometry& geom, double gamma, RngStream& rng,
                                            CenterRegion region) {
  geom.validate();
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma outside [0, 1]");
  const std::size_t k = geom.k();
  std::vector<std::uint8_t> centers(geom.m * geom.n, 0);
  for (std::size_t i = 0; i < geom.m; ++i)
    for (std::size_t j = 0; j < geom.n; ++j) {
      const bool hit = rng.bernoulli(gamma);
      if (region == CenterRegion::Valid &&
          (i < k || j < k || i + k >= geom.m || j + k >= geom.n))
        continue;
      centers[i * geom.n + j] = hit ? 1 : 0;
    }
  return expand_centers(geom, centers);
}

KeepMask normalize_keep(Tensor4 binary_keep) {
  KeepMask out;
  const std::size_t total = binary_keep.size();
  std::size_t kept = 0;
  for (double v : binary_keep.data()) kept += v != 0.0 ? 1 : 0;
  out.raw_drop_count = total - kept;
  if (kept == 0) {
    binary_keep.fill(1.0);
    out.keep = std::move(binary_keep);
    out.scale = 1.0;
    out.degenerate = true;
    return out;
  }
  out.scale = static_cast<double>(total) / static_cast<double>(kept);
  for (auto& v : binary_keep.data()) v = v != 0.0 ? out.scale : 0.0;
  out.keep = std::move(binary_keep);
  return out;
}

double block_gamma(const DropSpec& spec, const BlockGeometry& geom) {
  return gamma_for(spec.p, geom, spec.gamma_mode);
}

double half_coverage_gamma(const BlockGeometry& geom) {
  static std::mutex mutex;
  static std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> cache;
  const auto key = std::make_tuple(geom.m, geom.n, geom.b_size);
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  double gamma = 0.0;
  if (geom.exact_formula_applies()) {
    gamma = solve_gamma_exact(0.5, geom, 1e-12);
  } else {
    // Small planes: bisect on the mean of the exact per-unit map instead.
    geom.validate();
    const auto coverage = [&](double g) {
      const auto map = unit_drop_probability_map(g, geom);
      return std::accumulate(map.begin(), map.end(), 0.0) / static_cast<double>(map.size());
    };
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      (coverage(mid) < 0.5 ? lo : hi) = mid;
    }
    gamma = 0.5 * (lo + hi);
  }
  std::lock_guard lock(mutex);
  cache.emplace(key, gamma);
  return gamma;
}

MaskPair sample_bdropdml(const MaskShape& shape, const DropSpec& spec, RngStream& rng) {
  require_method(spec, {DropMethod::BDropDML}, "sample_bdropdml");
  spec.validate();
  check_shape(shape);
  const BlockGeometry geom = shape.geometry(spec.b_size);
  const auto pattern = dropblock_pattern(geom, block_gamma(spec, geom), rng, spec.center_region);

  Tensor4 keep1(shape.tensor_shape(), 1.0);
  Tensor4 keep2(shape.tensor_shape(), 1.0);
  for (std::size_t c = 0; c < shape.c; ++c) {
    // Channel goes to sub-model 1 with probability 0.5, otherwise to sub-model 2.
    auto target = rng.bernoulli(0.5) ? keep1.plane(0, c) : keep2.plane(0, c);
    for (std::size_t u = 0; u < target.size(); ++u)
      if (pattern[u]) target[u] = 0.0;
  }
  return make_pair(normalize_keep(std::move(keep1)), normalize_keep(std::move(keep2)));
}

MaskPair sample_sdropdml(const MaskShape& shape, const DropSpec& spec, RngStream& rng) {
  require_method(spec, {DropMethod::SDropDML}, "sample_sdropdml");
  spec.validate();
  check_shape(shape);
  const BlockGeometry geom = shape.geometry(spec.b_size);
  std::vector<std::uint8_t> dropped_channel(shape.c);
  for (auto& d : dropped_channel) d = rng.bernoulli(spec.p) ? 1 : 0;
  const auto first = dropblock_pattern(geom, half_coverage_gamma(geom), rng, spec.center_region);

  Tensor4 keep1(shape.tensor_shape(), 1.0);
  Tensor4 keep2(shape.tensor_shape(), 1.0);
  for (std::size_t c = 0; c < shape.c; ++c) {
    if (!dropped_channel[c]) continue;
    auto p1 = keep1.plane(0, c);
    auto p2 = keep2.plane(0, c);
    for (std::size_t u = 0; u < p1.size(); ++u) {
      // The second pattern is the complement of the first.
      if (first[u])
        p1[u] = 0.0;
      else
        p2[u] = 0.0;
    }
  }
  return make_pair(normalize_keep(std::move(keep1)), normalize_keep(std::move(keep2)));
}

MaskPair sample_pair_baselines(const MaskShape& shape, const DropSpec& spec, RngStream& rng) {
  require_method(spec,
                 {DropMethod::RDropPair, DropMethod::CDropPair, DropMethod::RSpatialPair,
                  DropMethod::RDropBlockPair},
                 "sample_pair_baselines");
  spec.validate();
  check_shape(shape);
  switch (spec.method) {
    case DropMethod::RDropPair: {
      Tensor4 a = dropout_keep(shape, spec.p, rng);
      Tensor4 b = dropout_keep(shape, spec.p, rng);
      return make_pair(normalize_keep(std::move(a)), normalize_keep(std::move(b)));
    }
    case DropMethod::CDropPair: {
      Tensor4 a = dropout_keep(shape, 0.5, rng);
      Tensor4 b(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) b[i] = 1.0 - a[i];
      return make_pair(normalize_keep(std::move(a)), normalize_keep(std::move(b)));
    }
    case DropMethod::RSpatialPair: {
      Tensor4 a = spatial_keep(shape, spec.p, rng);
      Tensor4 b = spatial_keep(shape, spec.p, rng);
      return make_pair(normalize_keep(std::move(a)), normalize_keep(std::move(b)));
    }
    default: {
      Tensor4 a = dropblock_keep(shape, spec, rng);
      Tensor4 b = dropblock_keep(shape, spec, rng);
      return make_pair(normalize_keep(std::move(a)), normalize_keep(std::move(b)));
    }
  }
}

KeepMask sample_single(const MaskShape& shape, const DropSpec& spec, RngStream& rng) {
  require_method(spec,
                 {DropMethod::None, DropMethod::Dropout, DropMethod::SpatialDropout,
                  DropMethod::DropBlock},
                 "sample_single");
  spec.validate();
  check_shape(shape);
  switch (spec.method) {
    case DropMethod::None: return normalize_keep(Tensor4(shape.tensor_shape(), 1.0));
    case DropMethod::Dropout: return normalize_keep(dropout_keep(shape, spec.p, rng));
    case DropMethod::SpatialDropout: return normalize_keep(spatial_keep(shape, spec.p, rng));
    default: return normalize_keep(dropblock_keep(shape, spec, rng));
  }
}

MaskPair sample_pair(const MaskShape& shape, const DropSpec& spec, RngStream& rng) {
  switch (spec.method) {
    case DropMethod::BDropDML: return sample_bdropdml(shape, spec, rng);
    case DropMethod::SDropDML: return sample_sdropdml(shape, spec, rng);
    default: return sample_pair_baselines(shape, spec, rng);
  }
}

Tensor4 apply_mask(const Tensor4& activations, const Tensor4& keep) {
  const Shape4 a = activations.shape();
  const Shape4 k = keep.shape();
  if (k.c != a.c || k.h != a.h || k.w != a.w || (k.n != 1 && k.n != a.n)) {
    throw ShapeError("apply_mask: mask " + k.str() + " not broadcastable to activations " + a.str());
  }
  Tensor4 out(a);
  const std::size_t per = a.sample_size();
  for (std::size_t s = 0; s < a.n; ++s) {
    const auto x = activations.sample(s);
    const auto m = keep.sample(k.n == 1 ? 0 : s);
    auto y = out.sample(s);
    for (std::size_t i = 0; i < per; ++i) y[i] = x[i] * m[i];
  }
  return out;
}

Tensor4 apply_mask_backward(const Tensor4& grad_out, const Tensor4& keep) {
  return apply_mask(grad_out, keep);
}

}  // namespace rblock
