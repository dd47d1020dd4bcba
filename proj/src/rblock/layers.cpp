// SPDX-License-Identifier: Apache-2.0
#include "rblock/layers.hpp"

#include <algorithm>
#include <string>

#include "rblock/error.hpp"

namespace rblock {
namespace {

void check_conv_params(const ConvParams& params) {
  const auto& ks = params.kernels.shape();
  if (params.bias.size() != ks.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(params.bias.size()) +
                     " does not match kernel shape " + ks.str());
  }
}

// Gathers every receptive field of one sample into a (c*kh*kw) x (oh*ow) matrix.
void im2col(std::span<const double> sample, const Shape4& in, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t padding, std::size_t oh, std::size_t ow,
            std::vector<double>& cols) {
  const std::size_t positions = oh * ow;
  cols.assign(in.c * kh * kw * positions, 0.0);
  std::size_t row = 0;
  for (std::size_t c = 0; c < in.c; ++c) {
    const double* plane = sample.data() + c * in.h * in.w;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj, ++row) {
        double* dst = cols.data() + row * positions;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * stride + ki) -
                          static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          const double* src = plane + static_cast<std::size_t>(iy) * in.w;
          for (std::size_t x = 0; x < ow; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x * stride + kj) -
                            static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            dst[y * ow + x] = src[ix];
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back into one sample's gradient.
void col2im(const std::vector<double>& cols, const Shape4& in, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t padding, std::size_t oh, std::size_t ow,
            std::span<double> sample) {
  const std::size_t positions = oh * ow;
  std::size_t row = 0;
  for (std::size_t c = 0; c < in.c; ++c) {
    double* plane = sample.data() + c * in.h * in.w;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj, ++row) {
        const double* src = cols.data() + row * positions;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * stride + ki) -
                          static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * in.w;
          for (std::size_t x = 0; x < ow; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x * stride + kj) -
                            static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
            dst[ix] += src[y * ow + x];
          }
        }
      }
    }
  }
}

// C (m x n) += A (m x k) * B (k x n); row-major, densely packed. Every entry
// accumulates its k products in index order, whichever tile computes it.
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  constexpr std::size_t MR = 4;
  constexpr std::size_t NR = 4;
  std::size_t i = 0;
  for (; i + MR <= m; i += MR) {
    std::size_t j = 0;
    for (; j + NR <= n; j += NR) {
      double acc[MR][NR];
      for (std::size_t ii = 0; ii < MR; ++ii)
        for (std::size_t jj = 0; jj < NR; ++jj) acc[ii][jj] = c[(i + ii) * n + j + jj];
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n + j;
        for (std::size_t ii = 0; ii < MR; ++ii) {
          const double av = a[(i + ii) * k + p];
          for (std::size_t jj = 0; jj < NR; ++jj) acc[ii][jj] += av * brow[jj];
        }
      }
      for (std::size_t ii = 0; ii < MR; ++ii)
        for (std::size_t jj = 0; jj < NR; ++jj) c[(i + ii) * n + j + jj] = acc[ii][jj];
    }
    for (; j < n; ++j) {
      for (std::size_t ii = 0; ii < MR; ++ii) {
        double acc = c[(i + ii) * n + j];
        for (std::size_t p = 0; p < k; ++p) acc += a[(i + ii) * k + p] * b[p * n + j];
        c[(i + ii) * n + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void transpose(const double* src, std::size_t rows, std::size_t cols, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

ConvParams ConvParams::zeros(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw) {
  return ConvParams{Tensor4({out_c, in_c, kh, kw}), std::vector<double>(out_c, 0.0)};
}

DenseParams DenseParams::zeros(std::size_t out_f, std::size_t in_f) {
  return DenseParams{out_f, in_f, std::vector<double>(out_f * in_f, 0.0),
                     std::vector<double>(out_f, 0.0)};
}

Shape4 conv2d_output_shape(const Shape4& input, const ConvParams& params, std::size_t stride,
                           std::size_t padding) {
  check_conv_params(params);
  const auto& ks = params.kernels.shape();
  if (stride == 0) throw InvalidArgument("conv2d: stride must be >= 1");
  if (ks.c != input.c) {
    throw ShapeError("conv2d: input " + input.str() + " has " + std::to_string(input.c) +
                     " channels but kernels " + ks.str() + " expect " + std::to_string(ks.c));
  }
  if (ks.h > input.h + 2 * padding || ks.w > input.w + 2 * padding) {
    throw ShapeError("conv2d: kernels " + ks.str() + " larger than padded input " + input.str() +
                     " (padding " + std::to_string(padding) + ")");
  }
  return {input.n, ks.n, (input.h + 2 * padding - ks.h) / stride + 1,
          (input.w + 2 * padding - ks.w) / stride + 1};
}

Tensor4 conv2d_forward(const Tensor4& input, const ConvParams& params, std::size_t stride,
                       std::size_t padding) {
  const Shape4 in = input.shape();
  const Shape4 out_shape = conv2d_output_shape(in, params, stride, padding);
  const auto& ks = params.kernels.shape();
  const std::size_t patch = ks.c * ks.h * ks.w;
  const std::size_t positions = out_shape.h * out_shape.w;

  Tensor4 out(out_shape);
  std::vector<double> cols;
  const double* weights = params.kernels.data().data();
  for (std::size_t s = 0; s < in.n; ++s) {
    im2col(input.sample(s), in, ks.h, ks.w, stride, padding, out_shape.h, out_shape.w, cols);
    double* dst = out.sample(s).data();
    for (std::size_t o = 0; o < out_shape.c; ++o) std::fill_n(dst + o * positions, positions, params.bias[o]);
    gemm_acc(out_shape.c, positions, patch, weights, cols.data(), dst);
  }
  return out;
}

Tensor4 conv2d_forward_reference(const Tensor4& input, const ConvParams& params,
                                 std::size_t stride, std::size_t padding) {
  const Shape4 in = input.shape();
  const Shape4 out_shape = conv2d_output_shape(in, params, stride, padding);
  const auto& ks = params.kernels.shape();
  Tensor4 out(out_shape);
  for (std::size_t s = 0; s < in.n; ++s)
    for (std::size_t o = 0; o < out_shape.c; ++o)
      for (std::size_t y = 0; y < out_shape.h; ++y)
        for (std::size_t x = 0; x < out_shape.w; ++x) {
          double acc = params.bias[o];
          for (std::size_t c = 0; c < in.c; ++c)
            for (std::size_t ki = 0; ki < ks.h; ++ki)
              for (std::size_t kj = 0; kj < ks.w; ++kj) {
                const auto iy = static_cast<std::ptrdiff_t>(y * stride + ki) -
                                static_cast<std::ptrdiff_t>(padding);
                const auto ix = static_cast<std::ptrdiff_t>(x * stride + kj) -
                                static_cast<std::ptrdiff_t>(padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(in.h) ||
                    ix >= static_cast<std::ptrdiff_t>(in.w))
                  continue;
                acc += params.kernels.at(o, c, ki, kj) *
                       input.at(s, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out.at(s, o, y, x) = acc;
        }
  return out;
}

ConvGrads conv2d_backward(const Tensor4& input, const ConvParams& params, const Tensor4& grad_out,
                          std::size_t stride, std::size_t padding) {
  const Shape4 in = input.shape();
  const Shape4 out_shape = conv2d_output_shape(in, params, stride, padding);
  require_same_shape(grad_out.shape(), out_shape, "conv2d_backward grad_out");
  const auto& ks = params.kernels.shape();
  const std::size_t patch = ks.c * ks.h * ks.w;
  const std::size_t positions = out_shape.h * out_shape.w;

  ConvGrads g{Tensor4(in), ConvParams::zeros(ks.n, ks.c, ks.h, ks.w)};
  std::vector<double> cols;
  std::vector<double> grad_cols;
  const double* weights = params.kernels.data().data();
  double* gw = g.grad_params.kernels.data().data();
  std::vector<double> cols_t;
  std::vector<double> weights_t;
  transpose(weights, ks.n, patch, weights_t);
  for (std::size_t s = 0; s < in.n; ++s) {
    im2col(input.sample(s), in, ks.h, ks.w, stride, padding, out_shape.h, out_shape.w, cols);
    const double* go = grad_out.sample(s).data();
    for (std::size_t o = 0; o < out_shape.c; ++o) {
      const double* go_row = go + o * positions;
      double bsum = 0.0;
      for (std::size_t p = 0; p < positions; ++p) bsum += go_row[p];
      g.grad_params.bias[o] += bsum;
    }
    transpose(cols.data(), patch, positions, cols_t);
    gemm_acc(out_shape.c, patch, positions, go, cols_t.data(), gw);
    grad_cols.assign(patch * positions, 0.0);
    gemm_acc(patch, positions, out_shape.c, weights_t.data(), go, grad_cols.data());
    col2im(grad_cols, in, ks.h, ks.w, stride, padding, out_shape.h, out_shape.w,
           g.grad_input.sample(s));
  }
  return g;
}

Tensor4 relu_forward(const Tensor4& input) {
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor4 relu_backward(const Tensor4& input, const Tensor4& grad_out) {
  require_same_shape(input.shape(), grad_out.shape(), "relu_backward");
  Tensor4 g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

MaxPoolResult maxpool2_forward(const Tensor4& input) {
  const Shape4 in = input.shape();
  if (in.h % 2 != 0 || in.w % 2 != 0) {
    throw ShapeError("maxpool2: spatial dims of " + in.str() + " must be even");
  }
  MaxPoolResult r{Tensor4({in.n, in.c, in.h / 2, in.w / 2}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t s = 0; s < in.n; ++s)
    for (std::size_t c = 0; c < in.c; ++c)
      for (std::size_t y = 0; y < in.h / 2; ++y)
        for (std::size_t x = 0; x < in.w / 2; ++x, ++o) {
          std::size_t best = input.index(s, c, 2 * y, 2 * x);
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = input.index(s, c, 2 * y + dy, 2 * x + dx);
              if (input[idx] > input[best]) best = idx;
            }
          r.output[o] = input[best];
          r.argmax[o] = best;
        }
  return r;
}

Tensor4 maxpool2_backward(const Shape4& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor4& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool2_backward: grad_out " + grad_out.shape().str() +
                     " does not match recorded argmax of length " + std::to_string(argmax.size()));
  }
  Tensor4 g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
  return g;
}

Tensor4 dense_forward(const Tensor4& input, const DenseParams& params) {
  const Shape4 in = input.shape();
  if (in.sample_size() != params.in_features || params.weight.size() != params.out_features * params.in_features ||
      params.bias.size() != params.out_features) {
    throw ShapeError("dense: input " + in.str() + " (features " + std::to_string(in.sample_size()) +
                     ") vs weight " + std::to_string(params.out_features) + "x" +
                     std::to_string(params.in_features));
  }
  Tensor4 out({in.n, params.out_features, 1, 1});
  for (std::size_t s = 0; s < in.n; ++s) {
    const auto x = input.sample(s);
    for (std::size_t o = 0; o < params.out_features; ++o) {
      const double* wrow = params.weight.data() + o * params.in_features;
      double acc = params.bias[o];
      for (std::size_t f = 0; f < params.in_features; ++f) acc += wrow[f] * x[f];
      out.at(s, o, 0, 0) = acc;
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor4& input, const DenseParams& params, const Tensor4& grad_out) {
  const Shape4 in = input.shape();
  require_same_shape(grad_out.shape(), {in.n, params.out_features, 1, 1}, "dense_backward grad_out");
  DenseGrads g{Tensor4(in), DenseParams::zeros(params.out_features, params.in_features)};
  for (std::size_t s = 0; s < in.n; ++s) {
    const auto x = input.sample(s);
    auto gx = g.grad_input.sample(s);
    for (std::size_t o = 0; o < params.out_features; ++o) {
      const double go = grad_out.at(s, o, 0, 0);
      g.grad_params.bias[o] += go;
      const double* wrow = params.weight.data() + o * params.in_features;
      double* gwrow = g.grad_params.weight.data() + o * params.in_features;
      for (std::size_t f = 0; f < params.in_features; ++f) {
        gwrow[f] += go * x[f];
        gx[f] += go * wrow[f];
      }
    }
  }
  return g;
}

Tensor4 bernoulli_sample(RngStream& rng, Shape4 shape, double prob_one) {
  if (!(prob_one >= 0.0 && prob_one <= 1.0)) {
    throw InvalidArgument("bernoulli_sample: prob_one " + std::to_string(prob_one) +
                          " outside [0, 1]");
  }
  Tensor4 t(shape);
  for (auto& v : t.data()) v = rng.bernoulli(prob_one) ? 1.0 : 0.0;
  return t;
}

}  // namespace rblock
