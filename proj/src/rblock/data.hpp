// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rblock/tensor.hpp"

namespace rblock {

struct Dataset {
  Tensor4 images;           // (samples, channels, height, width)
  std::vector<int> labels;  // zero-based class indices
  std::size_t classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  // Gathers the listed samples into a new batch tensor.
  Tensor4 gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarClasses = 10;

// Records of 1 label byte followed by 1024 red, 1024 green and 1024 blue
// bytes (row-major 32 x 32). Pixels are scaled to [0, 1].
Dataset parse_cifar10_records(std::span<const std::uint8_t> bytes, std::string_view source = "<memory>");
Dataset read_cifar10_file(const std::filesystem::path& path);
// Reads data_batch_1..5.bin and test_batch.bin from `dir`.
DatasetSplit load_cifar10(const std::filesystem::path& dir, bool standardize = true);

// Per-channel standardization with statistics taken from `split.train`.
void standardize_channels(DatasetSplit& split);

struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t per_class = 200;
  std::size_t channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise = 0.5;
  std::uint64_t seed = 7;
  // Sample stream: different splits share the class templates but draw
  // different noise.
  std::uint64_t split = 0;
};

/// Deterministic labeled images: every class owns a template built from a few
/// low-frequency cosine patterns per channel, and each sample is its class
/// template plus i.i.d. Gaussian noise. With noise = 0 every sample equals
/// its template. Samples are interleaved by class.
Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace rblock
