// SPDX-License-Identifier: Apache-2.0
#include "rblock/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "rblock/error.hpp"

namespace rblock {

std::string Shape4::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

Tensor4::Tensor4(Shape4 shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

std::span<double> Tensor4::sample(std::size_t n) noexcept {
  return std::span<double>(data_).subspan(n * shape_.sample_size(), shape_.sample_size());
}

std::span<const double> Tensor4::sample(std::size_t n) const noexcept {
  return std::span<const double>(data_).subspan(n * shape_.sample_size(), shape_.sample_size());
}

std::span<double> Tensor4::plane(std::size_t n, std::size_t c) noexcept {
  return std::span<double>(data_).subspan(index(n, c, 0, 0), shape_.plane_size());
}

std::span<const double> Tensor4::plane(std::size_t n, std::size_t c) const noexcept {
  return std::span<const double>(data_).subspan(index(n, c, 0, 0), shape_.plane_size());
}

void Tensor4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor4 Tensor4::reshaped(Shape4 shape) const {
  if (shape.size() != shape_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor4(shape, data_);
}

bool Tensor4::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double dot(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const Tensor4& t) noexcept {
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return acc;
}

void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

}  // namespace rblock
