// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rblock/tensor.hpp"

namespace rblock {

// Probabilities are clamped below at this value before taking logs.
inline constexpr double kProbClamp = 1e-12;

struct LossWeights {
  double alpha = 0.1;        // weight of the mutual KL terms
  double temperature = 3.0;  // softening applied to the distributions compared by KL
  bool detach_peer = false;  // true: each KL term only trains the sub-model it belongs to
  bool tempered_ce = false;  // true: cross-entropy on logits / T (ablation)

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double ce1 = 0.0;
  double ce2 = 0.0;
  double kl12 = 0.0;  // KL(p1 || p2), the peer term of sub-model 2
  double kl21 = 0.0;  // KL(p2 || p1), the peer term of sub-model 1
};

struct LossResult {
  LossBreakdown breakdown;
  Tensor4 grad1;  // d total / d logits1, shape (batch, classes, 1, 1)
  Tensor4 grad2;
};

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logits
};

struct KlResult {
  double value = 0.0;
  std::vector<double> grad_target;  // d/d p_target
  std::vector<double> grad_model;   // d/d p_model
};

std::vector<double> softmax_temp(std::span<const double> logits, double temperature = 1.0);

// -ln softmax(logits / temperature)[label]; label is zero-based.
CrossEntropyResult cross_entropy(std::span<const double> logits, std::size_t label,
                                 double temperature = 1.0);

// sum_k target[k] ln(target[k] / model[k]) with both clamped at kProbClamp.
KlResult kl_divergence(std::span<const double> target, std::span<const double> model);

// Batch mean of J1 + J2 where J_i = (1 - alpha) CE_i + alpha T^2 KL(p_j || p_i).
LossResult rblock_loss(const Tensor4& logits1, const Tensor4& logits2, std::span<const int> labels,
                       const LossWeights& weights);

// Plain batch-mean cross-entropy for single-model training.
struct SingleLossResult {
  double loss = 0.0;
  Tensor4 grad;
};
SingleLossResult mean_cross_entropy(const Tensor4& logits, std::span<const int> labels);

}  // namespace rblock
