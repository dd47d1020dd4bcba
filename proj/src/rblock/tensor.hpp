// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rblock {

// Axis order is always (batch, channels, height, width), row-major.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const noexcept { return n * c * h * w; }
  std::size_t sample_size() const noexcept { return c * h * w; }
  std::size_t plane_size() const noexcept { return h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0);
  Tensor4(Shape4 shape, std::vector<double> data);

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[index(n, c, h, w)];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[index(n, c, h, w)];
  }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> sample(std::size_t n) noexcept;
  std::span<const double> sample(std::size_t n) const noexcept;
  std::span<double> plane(std::size_t n, std::size_t c) noexcept;
  std::span<const double> plane(std::size_t n, std::size_t c) const noexcept;

  void fill(double v);
  // Same data under a new shape of equal element count.
  Tensor4 reshaped(Shape4 shape) const;
  bool all_finite() const noexcept;

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_;
  std::vector<double> data_;
};

double dot(const Tensor4& a, const Tensor4& b);
double sum(const Tensor4& t) noexcept;

// Throws ShapeError naming both shapes when they differ.
void require_same_shape(const Shape4& a, const Shape4& b, const char* what);

}  // namespace rblock
