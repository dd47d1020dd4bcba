// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rblock/layers.hpp"
#include "rblock/masks.hpp"
#include "rblock/rng.hpp"
#include "rblock/tensor.hpp"

namespace rblock {

enum class LayerKind { Conv, Relu, MaxPool, Dense, MaskSlot };

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t out = 0;  // Conv: output channels, Dense: output features
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

struct ModelSpec {
  std::size_t in_channels = 3;
  std::size_t in_height = 16;
  std::size_t in_width = 16;
  std::size_t classes = 10;
  std::vector<LayerSpec> layers;

  // Throws ShapeError if consecutive shapes are incompatible or the final
  // layer does not produce `classes` features.
  void validate() const;
  std::size_t mask_slot_count() const noexcept;

  // conv3x3(w0) relu mask conv3x3(w1) relu maxpool mask conv3x3(w2) relu maxpool dense(classes)
  static ModelSpec desk_default(std::size_t channels, std::size_t height, std::size_t width,
                                std::size_t classes, std::vector<std::size_t> widths = {16, 32, 64});
};

struct Parameters {
  std::vector<ConvParams> convs;
  std::vector<DenseParams> denses;

  // Every parameter buffer in declaration order (layer order, kernels before bias).
  std::vector<std::span<double>> buffers();
  std::vector<std::span<const double>> buffers() const;
  std::size_t count() const;
  Parameters zeros_like() const;
  // Order-sensitive FNV-1a digest of the raw bytes.
  std::uint64_t checksum() const;
  // this += other (shapes must match).
  void add(const Parameters& other);
};

class Network {
 public:
  struct Cache {
    std::vector<Tensor4> inputs;  // input to each layer
    std::vector<std::vector<std::size_t>> argmax;
  };

  // He-normal conv kernels, scaled normal dense weights, zero biases.
  Network(ModelSpec spec, RngStream& init_rng);
  Network(ModelSpec spec, Parameters params);

  const ModelSpec& spec() const noexcept { return spec_; }
  Parameters& params() noexcept { return params_; }
  const Parameters& params() const noexcept { return params_; }

  // Activation geometry at each mask slot, in slot order.
  std::vector<MaskShape> slot_shapes() const;

  // masks[i] applies at slot i; an empty tensor (or missing entry) means no mask.
  Tensor4 forward(const Tensor4& x, std::span<const Tensor4> masks = {}, Cache* cache = nullptr) const;
  Parameters backward(const Cache& cache, const Tensor4& grad_logits,
                      std::span<const Tensor4> masks = {}) const;

 private:
  ModelSpec spec_;
  Parameters params_;
};

}  // namespace rblock
