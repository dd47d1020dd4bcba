// SPDX-License-Identifier: Apache-2.0
#include "rblock/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "rblock/error.hpp"
#include "rblock/rng.hpp"

namespace rblock {
namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset concat(std::vector<Dataset> parts) {
  Dataset out;
  if (parts.empty()) return out;
  const Shape4 first = parts.front().images.shape();
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<double> data;
  data.reserve(total * first.sample_size());
  for (auto& p : parts) {
    data.insert(data.end(), p.images.data().begin(), p.images.data().end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  out.images = Tensor4({total, first.c, first.h, first.w}, std::move(data));
  out.classes = parts.front().classes;
  return out;
}

}  // namespace

Tensor4 Dataset::gather(std::span<const std::size_t> indices) const {
  const Shape4 s = images.shape();
  Tensor4 batch({indices.size(), s.c, s.h, s.w});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = images.sample(indices[i]);
    std::copy(src.begin(), src.end(), batch.sample(i).begin());
  }
  return batch;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels[indices[i]];
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

Dataset parse_cifar10_records(std::span<const std::uint8_t> bytes, std::string_view source) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
    throw FormatError(std::string(source) + ": length " + std::to_string(bytes.size()) +
                      " is not a multiple of " + std::to_string(kCifarRecordBytes) +
                      "; truncated record at byte offset " + std::to_string(offset));
  }
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  Dataset ds;
  ds.classes = kCifarClasses;
  ds.labels.resize(records);
  ds.images = Tensor4({records, 3, kCifarSide, kCifarSide});
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t base = r * kCifarRecordBytes;
    const std::uint8_t label = bytes[base];
    if (label >= kCifarClasses) {
      throw FormatError(std::string(source) + ": record " + std::to_string(r) + " at byte offset " +
                        std::to_string(base) + " has label " + std::to_string(label) + " > 9");
    }
    ds.labels[r] = label;
    auto dst = ds.images.sample(r);
    for (std::size_t i = 0; i < 3 * kCifarPlane; ++i) dst[i] = bytes[base + 1 + i] / 255.0;
  }
  return ds;
}

Dataset read_cifar10_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return parse_cifar10_records(bytes, path.string());
}

DatasetSplit load_cifar10(const std::filesystem::path& dir, bool standardize) {
  std::vector<Dataset> train_parts;
  for (int i = 1; i <= 5; ++i)
    train_parts.push_back(read_cifar10_file(dir / ("data_batch_" + std::to_string(i) + ".bin")));
  DatasetSplit split{concat(std::move(train_parts)), read_cifar10_file(dir / "test_batch.bin")};
  if (standardize) standardize_channels(split);
  return split;
}

void standardize_channels(DatasetSplit& split) {
  const Shape4 s = split.train.images.shape();
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < s.n; ++i)
      for (double v : split.train.images.plane(i, c)) {
        mean += v;
        sq += v * v;
      }
    const double count = static_cast<double>(s.n * s.plane_size());
    mean /= count;
    const double stddev = std::sqrt(std::max(sq / count - mean * mean, 1e-12));
    for (Dataset* ds : {&split.train, &split.test})
      for (std::size_t i = 0; i < ds->images.shape().n; ++i)
        for (double& v : ds->images.plane(i, c)) v = (v - mean) / stddev;
  }
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes == 0 || spec.per_class == 0 || spec.channels == 0 || spec.height == 0 ||
      spec.width == 0) {
    throw InvalidArgument("make_synthetic: all counts must be >= 1");
  }
  if (!(spec.noise >= 0.0)) throw InvalidArgument("make_synthetic: noise must be >= 0");
  const Shape4 sample_shape{1, spec.channels, spec.height, spec.width};
  const RngStream root(spec.seed, 0x5157A7E5ull);

  std::vector<Tensor4> templates;
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    RngStream rng = root.split(cls);
    Tensor4 t(sample_shape);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      for (int wave = 0; wave < 3; ++wave) {
        const double fy = static_cast<double>(rng.below(3));
        const double fx = static_cast<double>(rng.below(3));
        const double phase = 2.0 * std::numbers::pi * rng.uniform();
        const double amp = 0.5 + 0.5 * rng.uniform();
        for (std::size_t y = 0; y < spec.height; ++y)
          for (std::size_t x = 0; x < spec.width; ++x)
            t.at(0, c, y, x) += amp * std::cos(2.0 * std::numbers::pi *
                                                   (fy * static_cast<double>(y) / static_cast<double>(spec.height) +
                                                    fx * static_cast<double>(x) / static_cast<double>(spec.width)) +
                                               phase);
      }
    }
    templates.push_back(std::move(t));
  }

  const std::size_t total = spec.classes * spec.per_class;
  Dataset ds;
  ds.classes = spec.classes;
  ds.labels.resize(total);
  ds.images = Tensor4({total, spec.channels, spec.height, spec.width});
  RngStream noise = root.split(0x10000 + spec.split);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t cls = i % spec.classes;
    ds.labels[i] = static_cast<int>(cls);
    auto dst = ds.images.sample(i);
    const auto src = templates[cls].data();
    for (std::size_t u = 0; u < dst.size(); ++u)
      dst[u] = spec.noise == 0.0 ? src[u] : src[u] + spec.noise * noise.normal();
  }
  return ds;
}

}  // namespace rblock
