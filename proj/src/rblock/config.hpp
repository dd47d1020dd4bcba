// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rblock/data.hpp"
#include "rblock/losses.hpp"
#include "rblock/masks.hpp"
#include "rblock/sgd.hpp"

namespace rblock {

struct DatasetConfig {
  enum class Kind { Synthetic, Cifar10 };
  Kind kind = Kind::Synthetic;
  SyntheticSpec synthetic;          // train split; test uses split + 1
  std::size_t test_per_class = 50;  // synthetic only
  std::string path;                 // cifar10 directory
  bool standardize = true;          // cifar10 only
  std::size_t limit_train = 0;      // 0 = no limit
  std::size_t limit_test = 0;
};

/// Training run configuration. Defaults follow the reference CIFAR schedule:
/// SGD lr 0.1, momentum 0.9, weight decay 5e-4, batch 128, 200 epochs with
/// x0.1 decays at 75/130/180, T = 3, alpha = 0.1, p = 0.2, b_size = 3.
struct TrainConfig {
  OptimizerConfig optimizer;
  std::size_t batch_size = 128;
  std::size_t epochs = 200;
  std::vector<LrMilestone> lr_milestones{{75, 0.1}, {130, 0.1}, {180, 0.1}};
  LossWeights loss;
  DropSpec drop;
  std::vector<std::size_t> mask_placement{0, 1};  // active mask slots
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  std::size_t eval_every = 1;
  std::vector<std::size_t> model_widths{16, 32, 64};
  bool record_wall_ms = false;  // off by default so metrics are reproducible byte for byte
  bool track_train_acc = false;
  std::optional<double> target_train_acc;  // stop once unmasked train accuracy reaches this

  void validate() const;
};

// JSON object mirroring the TrainConfig field names; unknown keys are rejected.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_to_json(const TrainConfig& cfg, int indent = 2);

DatasetSplit load_dataset(const DatasetConfig& cfg);

}  // namespace rblock
