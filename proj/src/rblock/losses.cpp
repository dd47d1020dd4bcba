// SPDX-License-Identifier: Apache-2.0
#include "rblock/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rblock/error.hpp"

namespace rblock {
namespace {

void check_distribution(std::span<const double> p, const char* name) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw InvalidArgument(std::string(name) + " has a negative or NaN entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) {
    throw InvalidArgument(std::string(name) + " is not normalized (sum " + std::to_string(s) + ")");
  }
}

void check_logits(const Tensor4& logits1, const Tensor4& logits2, std::span<const int> labels) {
  require_same_shape(logits1.shape(), logits2.shape(), "rblock_loss logits");
  const Shape4 s = logits1.shape();
  if (s.h != 1 || s.w != 1) throw ShapeError("logits must be (batch, classes, 1, 1), got " + s.str());
  if (labels.size() != s.n) {
    throw ShapeError("labels length " + std::to_string(labels.size()) + " vs batch " +
                     std::to_string(s.n));
  }
}

double clamped_log(double p) { return std::log(std::max(p, kProbClamp)); }

}  // namespace

void LossWeights::validate() const {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must be in [0, 1)");
}

std::vector<double> softmax_temp(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("softmax_temp: temperature must be > 0");
  if (logits.empty()) throw InvalidArgument("softmax_temp: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp((logits[k] - mx) / temperature);
    z += p[k];
  }
  for (auto& v : p) v /= z;
  return p;
}

CrossEntropyResult cross_entropy(std::span<const double> logits, std::size_t label,
                                 double temperature) {
  if (label >= logits.size()) {
    throw InvalidArgument("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                          std::to_string(logits.size()) + ")");
  }
  if (!(temperature > 0.0)) throw InvalidArgument("cross_entropy: temperature must be > 0");
  // log-sum-exp form keeps the loss accurate when the label's probability underflows.
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp((v - mx) / temperature);
  CrossEntropyResult r;
  r.loss = std::log(z) - (logits[label] - mx) / temperature;
  r.grad = softmax_temp(logits, temperature);
  r.grad[label] -= 1.0;
  for (auto& g : r.grad) g /= temperature;
  return r;
}

KlResult kl_divergence(std::span<const double> target, std::span<const double> model) {
  if (target.size() != model.size()) {
    throw ShapeError("kl_divergence: lengths " + std::to_string(target.size()) + " vs " +
                     std::to_string(model.size()));
  }
  check_distribution(target, "kl_divergence target");
  check_distribution(model, "kl_divergence model");
  KlResult r;
  r.grad_target.resize(target.size());
  r.grad_model.resize(target.size());
  for (std::size_t k = 0; k < target.size(); ++k) {
    const double pt = std::max(target[k], kProbClamp);
    const double pm = std::max(model[k], kProbClamp);
    const double log_ratio = std::log(pt) - std::log(pm);
    r.value += target[k] * log_ratio;
    r.grad_target[k] = log_ratio + 1.0;
    r.grad_model[k] = -target[k] / pm;
  }
  r.value = std::max(r.value, 0.0);
  return r;
}

LossResult rblock_loss(const Tensor4& logits1, const Tensor4& logits2, std::span<const int> labels,
                       const LossWeights& w) {
  w.validate();
  check_logits(logits1, logits2, labels);
  const std::size_t batch = logits1.shape().n;
  const std::size_t classes = logits1.shape().c;
  const double T = w.temperature;
  const double ce_temp = w.tempered_ce ? T : 1.0;
  const double kl_weight = w.alpha * T * T;
  const double inv_batch = 1.0 / static_cast<double>(batch);

  LossResult r{{}, Tensor4(logits1.shape()), Tensor4(logits2.shape())};
  double total = 0.0;
  for (std::size_t s = 0; s < batch; ++s) {
    const auto z1 = logits1.sample(s);
    const auto z2 = logits2.sample(s);
    const auto label = static_cast<std::size_t>(labels[s]);
    const auto ce1 = cross_entropy(z1, label, ce_temp);
    const auto ce2 = cross_entropy(z2, label, ce_temp);
    const auto p1 = softmax_temp(z1, T);
    const auto p2 = softmax_temp(z2, T);

    std::vector<double> log1(classes), log2(classes);
    for (std::size_t k = 0; k < classes; ++k) {
      log1[k] = clamped_log(p1[k]);
      log2[k] = clamped_log(p2[k]);
    }
    double kl12 = 0.0;  // KL(p1 || p2)
    double kl21 = 0.0;  // KL(p2 || p1)
    for (std::size_t k = 0; k < classes; ++k) {
      kl12 += p1[k] * (log1[k] - log2[k]);
      kl21 += p2[k] * (log2[k] - log1[k]);
    }

    const double j1 = (1.0 - w.alpha) * ce1.loss + kl_weight * kl21;
    const double j2 = (1.0 - w.alpha) * ce2.loss + kl_weight * kl12;
    total += j1 + j2;
    r.breakdown.ce1 += ce1.loss;
    r.breakdown.ce2 += ce2.loss;
    r.breakdown.kl12 += kl12;
    r.breakdown.kl21 += kl21;

    // In logit space: d KL(q || p) / d z_p = (p - q) / T, and
    // d KL(p || q) / d z_p = p * (ln p - ln q - KL(p || q)) / T.
    auto g1 = r.grad1.sample(s);
    auto g2 = r.grad2.sample(s);
    for (std::size_t k = 0; k < classes; ++k) {
      double d1 = (1.0 - w.alpha) * ce1.grad[k] + kl_weight * (p1[k] - p2[k]) / T;
      double d2 = (1.0 - w.alpha) * ce2.grad[k] + kl_weight * (p2[k] - p1[k]) / T;
      if (!w.detach_peer) {
        d1 += kl_weight * p1[k] * (log1[k] - log2[k] - kl12) / T;
        d2 += kl_weight * p2[k] * (log2[k] - log1[k] - kl21) / T;
      }
      g1[k] = d1 * inv_batch;
      g2[k] = d2 * inv_batch;
    }
  }
  r.breakdown.total = total * inv_batch;
  r.breakdown.ce1 *= inv_batch;
  r.breakdown.ce2 *= inv_batch;
  r.breakdown.kl12 *= inv_batch;
  r.breakdown.kl21 *= inv_batch;
  return r;
}

SingleLossResult mean_cross_entropy(const Tensor4& logits, std::span<const int> labels) {
  const Shape4 s = logits.shape();
  if (s.h != 1 || s.w != 1) throw ShapeError("logits must be (batch, classes, 1, 1), got " + s.str());
  if (labels.size() != s.n) {
    throw ShapeError("labels length " + std::to_string(labels.size()) + " vs batch " +
                     std::to_string(s.n));
  }
  SingleLossResult r{0.0, Tensor4(s)};
  const double inv_batch = 1.0 / static_cast<double>(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto ce = cross_entropy(logits.sample(i), static_cast<std::size_t>(labels[i]));
    r.loss += ce.loss;
    auto g = r.grad.sample(i);
    for (std::size_t k = 0; k < s.c; ++k) g[k] = ce.grad[k] * inv_batch;
  }
  r.loss *= inv_batch;
  return r;
}

}  // namespace rblock
