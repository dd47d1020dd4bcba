// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "rblock/rng.hpp"
#include "rblock/tensor.hpp"

namespace rblock {

// Convolution parameters: kernels are (out_channels, in_channels, kh, kw).
struct ConvParams {
  Tensor4 kernels;
  std::vector<double> bias;

  std::size_t out_channels() const noexcept { return kernels.shape().n; }
  std::size_t in_channels() const noexcept { return kernels.shape().c; }
  static ConvParams zeros(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw);
};

// Dense parameters: weight is row-major (out_features, in_features).
struct DenseParams {
  std::size_t out_features = 0;
  std::size_t in_features = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  static DenseParams zeros(std::size_t out_f, std::size_t in_f);
};

struct ConvGrads {
  Tensor4 grad_input;
  ConvParams grad_params;
};

struct DenseGrads {
  Tensor4 grad_input;
  DenseParams grad_params;
};

Shape4 conv2d_output_shape(const Shape4& input, const ConvParams& params, std::size_t stride,
                           std::size_t padding);

// Patch-gather (im2col) convolution.
Tensor4 conv2d_forward(const Tensor4& input, const ConvParams& params, std::size_t stride = 1,
                       std::size_t padding = 0);
// Direct nested-loop convolution, kept as an in-repo reference for tests.
Tensor4 conv2d_forward_reference(const Tensor4& input, const ConvParams& params,
                                 std::size_t stride = 1, std::size_t padding = 0);
ConvGrads conv2d_backward(const Tensor4& input, const ConvParams& params, const Tensor4& grad_out,
                          std::size_t stride = 1, std::size_t padding = 0);

Tensor4 relu_forward(const Tensor4& input);
Tensor4 relu_backward(const Tensor4& input, const Tensor4& grad_out);

struct MaxPoolResult {
  Tensor4 output;
  std::vector<std::size_t> argmax;  // flat input index of each output's window max
};

// 2x2 windows, stride 2; spatial dims must be even.
MaxPoolResult maxpool2_forward(const Tensor4& input);
Tensor4 maxpool2_backward(const Shape4& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor4& grad_out);

// Flattens each sample to c*h*w features; output is (n, out_features, 1, 1).
Tensor4 dense_forward(const Tensor4& input, const DenseParams& params);
DenseGrads dense_backward(const Tensor4& input, const DenseParams& params, const Tensor4& grad_out);

// Entries independently 1 with probability prob_one, else 0.
Tensor4 bernoulli_sample(RngStream& rng, Shape4 shape, double prob_one);

}  // namespace rblock
