// SPDX-License-Identifier: Apache-2.0
#include "rblock/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rblock/losses.hpp"
#include "rblock/masks.hpp"
#include "rblock/sgd.hpp"

namespace rblock {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void shuffle(std::vector<std::size_t>& order, RngStream& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
}

std::vector<bool> active_slots(const Network& net, const TrainConfig& cfg) {
  const std::size_t slots = net.spec().mask_slot_count();
  std::vector<bool> active(slots, false);
  for (std::size_t s : cfg.mask_placement) {
    if (s >= slots) {
      throw InvalidArgument("mask_placement index " + std::to_string(s) + " but model has " +
                            std::to_string(slots) + " mask slots");
    }
    active[s] = true;
  }
  return active;
}

void check_inputs(const Network& net, const DatasetSplit& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.size() == 0) throw InvalidArgument("training set is empty");
  if (data.train.classes != net.spec().classes) {
    throw InvalidArgument("dataset has " + std::to_string(data.train.classes) + " classes, model " +
                          std::to_string(net.spec().classes));
  }
}

// Stacks per-sample keep masks into one (batch, c, h, w) tensor.
void place_sample(Tensor4& batch_mask, std::size_t sample, const Tensor4& keep) {
  const auto src = keep.sample(0);
  std::copy(src.begin(), src.end(), batch_mask.sample(sample).begin());
}

struct EpochAccumulator {
  double total = 0, ce1 = 0, ce2 = 0, kl12 = 0, kl21 = 0;
  std::size_t samples = 0;

  void add(const LossBreakdown& b, std::size_t n) {
    const double w = static_cast<double>(n);
    total += b.total * w;
    ce1 += b.ce1 * w;
    ce2 += b.ce2 * w;
    kl12 += b.kl12 * w;
    kl21 += b.kl21 * w;
    samples += n;
  }
};

enum class Mode { Pair, Single };

TrainResult run_training(Network& net, const DatasetSplit& data, const TrainConfig& cfg,
                         const TrainHooks& hooks, Mode mode) {
  check_inputs(net, data, cfg);
  const auto active = active_slots(net, cfg);
  const auto slot_shapes = net.slot_shapes();
  const bool masking = cfg.drop.method != DropMethod::None;
  if (mode == Mode::Pair && !is_pair_method(cfg.drop.method)) {
    throw InvalidArgument("train_rblock needs a pair method, got '" +
                          std::string(to_string(cfg.drop.method)) + "'");
  }
  if (mode == Mode::Single && is_pair_method(cfg.drop.method)) {
    throw InvalidArgument("train_single cannot use pair method '" +
                          std::string(to_string(cfg.drop.method)) + "'");
  }

  const RngStream root(cfg.seed, 0);
  RngStream shuffle_rng = root.split(1);
  const RngStream mask_root = root.split(2);
  Sgd opt(cfg.optimizer);
  const std::string label = method_label(cfg.drop);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  double best = 0.0;
  double last_val = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  auto epoch_start = t0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    DropSpec spec = cfg.drop;
    spec.p = cfg.drop.p_for_epoch(epoch, cfg.epochs);
    const double lr = lr_at_epoch(cfg.optimizer.lr, cfg.lr_milestones, epoch);
    shuffle(order, shuffle_rng);
    EpochAccumulator acc;
    bool stop = false;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor4 x = data.train.gather(idx);
      const std::vector<int> y = data.train.gather_labels(idx);
      const std::size_t bsz = idx.size();
      RngStream step_rng = mask_root.split(result.steps);

      std::vector<Tensor4> masks1(slot_shapes.size());
      std::vector<Tensor4> masks2(slot_shapes.size());
      if (masking) {
        for (std::size_t s = 0; s < slot_shapes.size(); ++s) {
          if (!active[s]) continue;
          const std::size_t copies = spec.per_sample ? bsz : 1;
          Shape4 ms = slot_shapes[s].tensor_shape();
          ms.n = copies;
          masks1[s] = Tensor4(ms);
          if (mode == Mode::Pair) masks2[s] = Tensor4(ms);
          for (std::size_t i = 0; i < copies; ++i) {
            if (mode == Mode::Pair) {
              const MaskPair pair = sample_pair(slot_shapes[s], spec, step_rng);
              place_sample(masks1[s], i, pair.keep1);
              place_sample(masks2[s], i, pair.keep2);
              result.degenerate_masks += pair.degenerate_count();
            } else {
              const KeepMask km = sample_single(slot_shapes[s], spec, step_rng);
              place_sample(masks1[s], i, km.keep);
              result.degenerate_masks += km.degenerate ? 1 : 0;
            }
          }
        }
      }

      LossBreakdown breakdown;
      Parameters grads;
      if (mode == Mode::Pair) {
        Network::Cache c1, c2;
        const std::uint64_t sum1 = hooks.on_pass_checksums ? net.params().checksum() : 0;
        const Tensor4 z1 = net.forward(x, masks1, &c1);
        const std::uint64_t sum2 = hooks.on_pass_checksums ? net.params().checksum() : 0;
        const Tensor4 z2 = net.forward(x, masks2, &c2);
        if (hooks.on_pass_checksums) hooks.on_pass_checksums(result.steps, sum1, sum2);
        const LossResult loss = rblock_loss(z1, z2, y, cfg.loss);
        breakdown = loss.breakdown;
        if (std::isfinite(breakdown.total)) {
          grads = net.backward(c1, loss.grad1, masks1);
          grads.add(net.backward(c2, loss.grad2, masks2));
        }
      } else {
        Network::Cache c1;
        const Tensor4 z = net.forward(x, masks1, &c1);
        const SingleLossResult loss = mean_cross_entropy(z, y);
        breakdown.total = loss.loss;
        breakdown.ce1 = loss.loss;
        if (std::isfinite(loss.loss)) grads = net.backward(c1, loss.grad, masks1);
      }

      if (!std::isfinite(breakdown.total)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch + 1 << " step " << result.steps << " (lr " << lr
            << ", p " << spec.p << "): total=" << breakdown.total << " ce1=" << breakdown.ce1
            << " ce2=" << breakdown.ce2 << " kl12=" << breakdown.kl12 << " kl21=" << breakdown.kl21
            << " param_checksum=" << net.params().checksum();
        throw DivergenceError(msg.str());
      }

      opt.step(net.params(), grads, lr);
      acc.add(breakdown, bsz);
      result.step_losses.push_back(breakdown.total);
      ++result.steps;
      if (hooks.max_steps != 0 && result.steps >= hooks.max_steps) {
        stop = true;
        break;
      }
    }

    MetricsRow row;
    row.method = label;
    row.epoch = epoch + 1;
    const double n = static_cast<double>(std::max<std::size_t>(acc.samples, 1));
    row.loss_total = acc.total / n;
    row.loss_ce1 = acc.ce1 / n;
    row.loss_ce2 = acc.ce2 / n;
    row.loss_kl12 = acc.kl12 / n;
    row.loss_kl21 = acc.kl21 / n;
    if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs || stop) {
      last_val = data.test.size() ? evaluate(net, data.test) : 0.0;
    }
    row.val_acc = last_val;
    best = std::max(best, last_val);
    row.best_val_acc = best;
    row.p_current = spec.p;
    if (cfg.record_wall_ms) {
      const auto now = std::chrono::steady_clock::now();
      row.wall_ms = static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::milliseconds>(now - epoch_start).count());
      epoch_start = now;
    }
    if (cfg.track_train_acc || cfg.target_train_acc) {
      const double tr = evaluate(net, data.train);
      result.train_acc.push_back(tr);
      if (cfg.target_train_acc && tr >= *cfg.target_train_acc) {
        result.reached_target = true;
        stop = true;
      }
    }
    result.metrics.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row, net);
    if (stop) break;
  }
  return result;
}

}  // namespace

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out(kMetricsCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.method + ',' + std::to_string(r.epoch) + ',' + fmt_double(r.loss_total) + ',' +
           fmt_double(r.loss_ce1) + ',' + fmt_double(r.loss_ce2) + ',' + fmt_double(r.loss_kl12) + ',' +
           fmt_double(r.loss_kl21) + ',' + fmt_double(r.val_acc) + ',' + fmt_double(r.best_val_acc) + ',' +
           fmt_double(r.p_current) + ',' + std::to_string(r.wall_ms) + '\n';
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InvalidArgument("cannot write '" + path.string() + "'");
  f << metrics_csv(rows);
}

Network build_network(const TrainConfig& cfg, const Dataset& train) {
  const Shape4 s = train.images.shape();
  RngStream init = RngStream(cfg.seed, 0).split(0);
  return Network(ModelSpec::desk_default(s.c, s.h, s.w, train.classes, cfg.model_widths), init);
}

double evaluate(const Network& net, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor4 logits = net.forward(data.gather(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto z = logits.sample(i);
      const auto pred = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
      correct += pred == static_cast<std::size_t>(data.labels[idx[i]]) ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_rblock(Network& net, const DatasetSplit& data, const TrainConfig& cfg,
                         const TrainHooks& hooks) {
  return run_training(net, data, cfg, hooks, Mode::Pair);
}

TrainResult train_single(Network& net, const DatasetSplit& data, const TrainConfig& cfg,
                         const TrainHooks& hooks) {
  return run_training(net, data, cfg, hooks, Mode::Single);
}

TrainResult train(Network& net, const DatasetSplit& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  return is_pair_method(cfg.drop.method) ? train_rblock(net, data, cfg, hooks)
                                         : train_single(net, data, cfg, hooks);
}

std::string method_label(const DropSpec& spec) { return std::string(to_string(spec.method)); }

}  // namespace rblock
