// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rblock/network.hpp"

namespace rblock {

struct OptimizerConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct LrMilestone {
  std::size_t epoch = 0;  // decay applies from this zero-based epoch on
  double factor = 0.1;
};

// Base lr times the factor of every milestone with epoch <= `epoch`.
double lr_at_epoch(double base_lr, std::span<const LrMilestone> milestones, std::size_t epoch);

// Heavy-ball SGD with L2 weight decay folded into the gradient:
//   d = g + wd * w;  v = momentum * v + d;  w -= lr * v
class Sgd {
 public:
  explicit Sgd(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(Parameters& params, const Parameters& grads, double lr);
  const OptimizerConfig& config() const noexcept { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace rblock
