// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rblock/config.hpp"
#include "rblock/data.hpp"
#include "rblock/error.hpp"
#include "rblock/network.hpp"

namespace rblock {

struct MetricsRow {
  std::string method;
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double loss_total = 0.0;
  double loss_ce1 = 0.0;
  double loss_ce2 = 0.0;
  double loss_kl12 = 0.0;
  double loss_kl21 = 0.0;
  double val_acc = 0.0;
  double best_val_acc = 0.0;
  double p_current = 0.0;
  std::uint64_t wall_ms = 0;
};

inline constexpr std::string_view kMetricsCsvHeader =
    "method,epoch,loss_total,loss_ce1,loss_ce2,loss_kl12,loss_kl21,val_acc,best_val_acc,p_current,wall_ms";

std::string metrics_csv(std::span<const MetricsRow> rows);
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

// Thrown when the training loss stops being finite; the message carries the
// optimizer state at the failing step.
class DivergenceError : public NumericalError {
 public:
  explicit DivergenceError(const std::string& what) : NumericalError(what) {}
};

struct TrainHooks {
  std::function<void(const MetricsRow&, const Network&)> on_epoch;
  // Parameter checksums observed right before pass 1 and pass 2 of a step.
  std::function<void(std::size_t step, std::uint64_t pass1, std::uint64_t pass2)> on_pass_checksums;
  std::size_t max_steps = 0;  // 0 = run all epochs
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::vector<double> step_losses;  // objective value of every optimizer step
  std::vector<double> train_acc;    // per epoch, when tracked
  std::size_t steps = 0;
  std::size_t degenerate_masks = 0;
  bool reached_target = false;
};

// Builds the desk-scale model for a dataset; init draws from the config seed.
Network build_network(const TrainConfig& cfg, const Dataset& train);

// Fraction of samples whose unmasked argmax matches the label.
double evaluate(const Network& net, const Dataset& data, std::size_t batch_size = 256);

/// Two-pass training: every step draws one mask pair per active slot, runs
/// the batch through both sub-models with shared parameters, and steps SGD on
/// the summed gradient of the mutual-learning objective.
TrainResult train_rblock(Network& net, const DatasetSplit& data, const TrainConfig& cfg,
                         const TrainHooks& hooks = {});
// One pass, one mask draw per slot, plain cross-entropy.
TrainResult train_single(Network& net, const DatasetSplit& data, const TrainConfig& cfg,
                         const TrainHooks& hooks = {});
// train_rblock for pair methods, train_single otherwise.
TrainResult train(Network& net, const DatasetSplit& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

std::string method_label(const DropSpec& spec);

}  // namespace rblock
