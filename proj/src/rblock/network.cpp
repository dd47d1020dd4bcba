// SPDX-License-Identifier: Apache-2.0
#include "rblock/network.hpp"

#include <cmath>
#include <cstring>

#include "rblock/error.hpp"

namespace rblock {
namespace {

struct ShapeWalk {
  std::size_t c, h, w;
};

const Tensor4* mask_at(std::span<const Tensor4> masks, std::size_t slot) {
  if (slot >= masks.size() || masks[slot].empty()) return nullptr;
  return &masks[slot];
}

}  // namespace

void ModelSpec::validate() const {
  ShapeWalk s{in_channels, in_height, in_width};
  if (s.c == 0 || s.h == 0 || s.w == 0) throw ShapeError("model input dims must be >= 1");
  if (layers.empty() || layers.back().kind != LayerKind::Dense) {
    throw ShapeError("model must end with a dense layer");
  }
  bool flat = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    if (flat && l.kind != LayerKind::Relu) {
      throw ShapeError(where + ": only dense output is allowed after a dense layer");
    }
    switch (l.kind) {
      case LayerKind::Conv:
        if (l.out == 0 || l.kernel == 0 || l.stride == 0) throw ShapeError(where + ": bad conv spec");
        if (l.kernel > s.h + 2 * l.padding || l.kernel > s.w + 2 * l.padding) {
          throw ShapeError(where + ": kernel larger than padded input " + std::to_string(s.h) + "x" +
                           std::to_string(s.w));
        }
        s = {l.out, (s.h + 2 * l.padding - l.kernel) / l.stride + 1,
             (s.w + 2 * l.padding - l.kernel) / l.stride + 1};
        break;
      case LayerKind::MaxPool:
        if (s.h % 2 || s.w % 2) {
          throw ShapeError(where + ": maxpool needs even dims, got " + std::to_string(s.h) + "x" +
                           std::to_string(s.w));
        }
        s = {s.c, s.h / 2, s.w / 2};
        break;
      case LayerKind::Dense:
        if (l.out == 0) throw ShapeError(where + ": dense needs >= 1 output");
        s = {l.out, 1, 1};
        flat = true;
        break;
      case LayerKind::Relu:
      case LayerKind::MaskSlot:
        break;
    }
  }
  if (s.c != classes) {
    throw ShapeError("final layer yields " + std::to_string(s.c) + " features, expected " +
                     std::to_string(classes) + " classes");
  }
}

std::size_t ModelSpec::mask_slot_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.kind == LayerKind::MaskSlot ? 1 : 0;
  return n;
}

ModelSpec ModelSpec::desk_default(std::size_t channels, std::size_t height, std::size_t width,
                                  std::size_t classes, std::vector<std::size_t> widths) {
  if (widths.size() != 3) throw InvalidArgument("desk_default expects three conv widths");
  ModelSpec m;
  m.in_channels = channels;
  m.in_height = height;
  m.in_width = width;
  m.classes = classes;
  const LayerSpec relu{LayerKind::Relu};
  const LayerSpec pool{LayerKind::MaxPool};
  const LayerSpec slot{LayerKind::MaskSlot};
  m.layers = {{LayerKind::Conv, widths[0]}, relu, slot,
              {LayerKind::Conv, widths[1]}, relu, pool, slot,
              {LayerKind::Conv, widths[2]}, relu, pool,
              {LayerKind::Dense, classes}};
  m.validate();
  return m;
}

std::vector<std::span<double>> Parameters::buffers() {
  std::vector<std::span<double>> out;
  for (auto& c : convs) {
    out.emplace_back(c.kernels.data());
    out.emplace_back(c.bias);
  }
  for (auto& d : denses) {
    out.emplace_back(d.weight);
    out.emplace_back(d.bias);
  }
  return out;
}

std::vector<std::span<const double>> Parameters::buffers() const {
  std::vector<std::span<const double>> out;
  for (const auto& c : convs) {
    out.emplace_back(c.kernels.data());
    out.emplace_back(c.bias);
  }
  for (const auto& d : denses) {
    out.emplace_back(d.weight);
    out.emplace_back(d.bias);
  }
  return out;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const auto& b : buffers()) n += b.size();
  return n;
}

Parameters Parameters::zeros_like() const {
  Parameters z;
  for (const auto& c : convs) {
    const auto& s = c.kernels.shape();
    z.convs.push_back(ConvParams::zeros(s.n, s.c, s.h, s.w));
  }
  for (const auto& d : denses) z.denses.push_back(DenseParams::zeros(d.out_features, d.in_features));
  return z;
}

std::uint64_t Parameters::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& buf : buffers()) {
    for (double v : buf) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

void Parameters::add(const Parameters& other) {
  auto dst = buffers();
  const auto src = other.buffers();
  if (dst.size() != src.size()) throw ShapeError("Parameters::add: layout mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].size() != src[i].size()) throw ShapeError("Parameters::add: buffer size mismatch");
    for (std::size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += src[i][j];
  }
}

Network::Network(ModelSpec spec, RngStream& init_rng) : spec_(std::move(spec)) {
  spec_.validate();
  ShapeWalk s{spec_.in_channels, spec_.in_height, spec_.in_width};
  for (const auto& l : spec_.layers) {
    if (l.kind == LayerKind::Conv) {
      auto p = ConvParams::zeros(l.out, s.c, l.kernel, l.kernel);
      const double stddev = std::sqrt(2.0 / static_cast<double>(s.c * l.kernel * l.kernel));
      for (auto& v : p.kernels.data()) v = stddev * init_rng.normal();
      params_.convs.push_back(std::move(p));
      s = {l.out, (s.h + 2 * l.padding - l.kernel) / l.stride + 1,
           (s.w + 2 * l.padding - l.kernel) / l.stride + 1};
    } else if (l.kind == LayerKind::MaxPool) {
      s = {s.c, s.h / 2, s.w / 2};
    } else if (l.kind == LayerKind::Dense) {
      const std::size_t in = s.c * s.h * s.w;
      auto p = DenseParams::zeros(l.out, in);
      const double stddev = std::sqrt(1.0 / static_cast<double>(in));
      for (auto& v : p.weight) v = stddev * init_rng.normal();
      params_.denses.push_back(std::move(p));
      s = {l.out, 1, 1};
    }
  }
}

Network::Network(ModelSpec spec, Parameters params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  RngStream scratch;
  const Network shape_ref(spec_, scratch);
  const auto want = shape_ref.params().buffers();
  const auto have = params_.buffers();
  if (want.size() != have.size()) throw ShapeError("parameter layout does not match model");
  for (std::size_t i = 0; i < want.size(); ++i)
    if (want[i].size() != have[i].size()) {
      throw ShapeError("parameter buffer " + std::to_string(i) + " has " + std::to_string(have[i].size()) +
                       " values, model expects " + std::to_string(want[i].size()));
    }
}

std::vector<MaskShape> Network::slot_shapes() const {
  std::vector<MaskShape> out;
  ShapeWalk s{spec_.in_channels, spec_.in_height, spec_.in_width};
  for (const auto& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        s = {l.out, (s.h + 2 * l.padding - l.kernel) / l.stride + 1,
             (s.w + 2 * l.padding - l.kernel) / l.stride + 1};
        break;
      case LayerKind::MaxPool: s = {s.c, s.h / 2, s.w / 2}; break;
      case LayerKind::Dense: s = {l.out, 1, 1}; break;
      case LayerKind::MaskSlot: out.push_back({s.h, s.w, s.c}); break;
      case LayerKind::Relu: break;
    }
  }
  return out;
}

Tensor4 Network::forward(const Tensor4& x, std::span<const Tensor4> masks, Cache* cache) const {
  const Shape4 in = x.shape();
  if (in.c != spec_.in_channels || in.h != spec_.in_height || in.w != spec_.in_width) {
    throw ShapeError("network input " + in.str() + " does not match model input " +
                     std::to_string(spec_.in_channels) + "x" + std::to_string(spec_.in_height) + "x" +
                     std::to_string(spec_.in_width));
  }
  if (cache) {
    cache->inputs.clear();
    cache->argmax.clear();
  }
  Tensor4 a = x;
  std::size_t conv_i = 0, dense_i = 0, slot_i = 0;
  for (const auto& l : spec_.layers) {
    if (cache) cache->inputs.push_back(a);
    switch (l.kind) {
      case LayerKind::Conv: a = conv2d_forward(a, params_.convs[conv_i++], l.stride, l.padding); break;
      case LayerKind::Relu: a = relu_forward(a); break;
      case LayerKind::MaxPool: {
        auto r = maxpool2_forward(a);
        a = std::move(r.output);
        if (cache) cache->argmax.push_back(std::move(r.argmax));
        break;
      }
      case LayerKind::Dense: a = dense_forward(a, params_.denses[dense_i++]); break;
      case LayerKind::MaskSlot:
        if (const Tensor4* m = mask_at(masks, slot_i)) a = apply_mask(a, *m);
        ++slot_i;
        break;
    }
  }
  return a;
}

Parameters Network::backward(const Cache& cache, const Tensor4& grad_logits,
                             std::span<const Tensor4> masks) const {
  if (cache.inputs.size() != spec_.layers.size()) {
    throw InvalidArgument("Network::backward: cache does not come from a forward pass of this model");
  }
  Parameters grads = params_.zeros_like();
  std::size_t conv_i = params_.convs.size();
  std::size_t dense_i = params_.denses.size();
  std::size_t slot_i = spec_.mask_slot_count();
  std::size_t pool_i = cache.argmax.size();
  Tensor4 g = grad_logits;
  for (std::size_t li = spec_.layers.size(); li-- > 0;) {
    const auto& l = spec_.layers[li];
    const Tensor4& input = cache.inputs[li];
    switch (l.kind) {
      case LayerKind::Conv: {
        --conv_i;
        auto r = conv2d_backward(input, params_.convs[conv_i], g, l.stride, l.padding);
        grads.convs[conv_i] = std::move(r.grad_params);
        g = std::move(r.grad_input);
        break;
      }
      case LayerKind::Relu: g = relu_backward(input, g); break;
      case LayerKind::MaxPool: g = maxpool2_backward(input.shape(), cache.argmax[--pool_i], g); break;
      case LayerKind::Dense: {
        --dense_i;
        auto r = dense_backward(input, params_.denses[dense_i], g);
        grads.denses[dense_i] = std::move(r.grad_params);
        g = std::move(r.grad_input);
        break;
      }
      case LayerKind::MaskSlot:
        --slot_i;
        if (const Tensor4* m = mask_at(masks, slot_i)) g = apply_mask_backward(g, *m);
        break;
    }
  }
  return grads;
}

}  // namespace rblock
