// SPDX-License-Identifier: Apache-2.0
#include "rblock/sgd.hpp"

#include "rblock/error.hpp"

namespace rblock {

double lr_at_epoch(double base_lr, std::span<const LrMilestone> milestones, std::size_t epoch) {
  double lr = base_lr;
  for (const auto& m : milestones)
    if (epoch >= m.epoch) lr *= m.factor;
  return lr;
}

void Sgd::step(Parameters& params, const Parameters& grads, double lr) {
  auto w = params.buffers();
  const auto g = grads.buffers();
  if (w.size() != g.size()) throw ShapeError("Sgd::step: gradient layout mismatch");
  if (velocity_.empty()) {
    for (const auto& buf : w) velocity_.emplace_back(buf.size(), 0.0);
  }
  for (std::size_t b = 0; b < w.size(); ++b) {
    if (w[b].size() != g[b].size()) throw ShapeError("Sgd::step: gradient buffer size mismatch");
    auto& v = velocity_[b];
    for (std::size_t i = 0; i < w[b].size(); ++i) {
      const double d = g[b][i] + cfg_.weight_decay * w[b][i];
      v[i] = cfg_.momentum * v[i] + d;
      w[b][i] -= lr * v[i];
    }
  }
}

}  // namespace rblock
