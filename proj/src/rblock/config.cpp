// SPDX-License-Identifier: Apache-2.0
#include "rblock/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rblock/error.hpp"

namespace rblock {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw FormatError("config: '" + where + "' must be an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!keys.contains(key)) throw FormatError("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void parse_optimizer(const json& j, OptimizerConfig& o) {
  reject_unknown(j, {"lr", "momentum", "weight_decay"}, "optimizer");
  read(j, "lr", o.lr);
  read(j, "momentum", o.momentum);
  read(j, "weight_decay", o.weight_decay);
}

void parse_loss(const json& j, LossWeights& w) {
  reject_unknown(j, {"alpha", "temperature", "detach_peer", "tempered_ce"}, "loss");
  read(j, "alpha", w.alpha);
  read(j, "temperature", w.temperature);
  read(j, "detach_peer", w.detach_peer);
  read(j, "tempered_ce", w.tempered_ce);
}

void parse_drop(const json& j, DropSpec& d) {
  reject_unknown(j, {"method", "p", "b_size", "gamma_mode", "center_region", "schedule", "per_sample"},
                 "drop");
  if (j.contains("method")) d.method = parse_drop_method(j["method"].get<std::string>());
  read(j, "p", d.p);
  read(j, "b_size", d.b_size);
  if (j.contains("gamma_mode")) d.gamma_mode = parse_gamma_mode(j["gamma_mode"].get<std::string>());
  if (j.contains("center_region")) {
    d.center_region = parse_center_region(j["center_region"].get<std::string>());
  }
  read(j, "per_sample", d.per_sample);
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    reject_unknown(s, {"kind", "target"}, "drop.schedule");
    const auto kind = s.value("kind", std::string("constant"));
    if (kind == "constant") {
      d.schedule.kind = DropSchedule::Kind::Constant;
    } else if (kind == "linear_ramp") {
      d.schedule.kind = DropSchedule::Kind::LinearRamp;
      d.schedule.target = s.value("target", d.p);
    } else {
      throw FormatError("config: unknown schedule kind '" + kind + "'");
    }
  }
}

void parse_dataset(const json& j, DatasetConfig& d) {
  if (!j.is_object()) throw FormatError("config: 'dataset' must be an object");
  const auto kind = j.value("kind", std::string("synthetic"));
  if (kind == "synthetic") {
    reject_unknown(j, {"kind", "classes", "per_class", "test_per_class", "channels", "height", "width",
                       "noise", "seed"},
                   "dataset");
    d.kind = DatasetConfig::Kind::Synthetic;
    read(j, "classes", d.synthetic.classes);
    read(j, "per_class", d.synthetic.per_class);
    read(j, "test_per_class", d.test_per_class);
    read(j, "channels", d.synthetic.channels);
    read(j, "height", d.synthetic.height);
    read(j, "width", d.synthetic.width);
    read(j, "noise", d.synthetic.noise);
    read(j, "seed", d.synthetic.seed);
  } else if (kind == "cifar10") {
    reject_unknown(j, {"kind", "path", "standardize", "limit_train", "limit_test"}, "dataset");
    d.kind = DatasetConfig::Kind::Cifar10;
    read(j, "path", d.path);
    read(j, "standardize", d.standardize);
    read(j, "limit_train", d.limit_train);
    read(j, "limit_test", d.limit_test);
  } else {
    throw FormatError("config: unknown dataset kind '" + kind + "'");
  }
}

Dataset truncate(Dataset ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.size()) return ds;
  const Shape4 s = ds.images.shape();
  const auto first = ds.images.data().subspan(0, limit * s.sample_size());
  ds.images = Tensor4({limit, s.c, s.h, s.w}, std::vector<double>(first.begin(), first.end()));
  ds.labels.resize(limit);
  return ds;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (epochs == 0) throw InvalidArgument("epochs must be >= 1");
  if (eval_every == 0) throw InvalidArgument("eval_every must be >= 1");
  if (!(optimizer.lr > 0.0)) throw InvalidArgument("optimizer.lr must be > 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) {
    throw InvalidArgument("optimizer.momentum must be in [0, 1)");
  }
  if (!(optimizer.weight_decay >= 0.0)) throw InvalidArgument("optimizer.weight_decay must be >= 0");
  for (std::size_t i = 1; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i].epoch <= lr_milestones[i - 1].epoch) {
      throw InvalidArgument("lr_milestones must be strictly increasing");
    }
  }
  if (model_widths.size() != 3) throw InvalidArgument("model_widths must list three conv widths");
  if (target_train_acc && !(*target_train_acc > 0.0 && *target_train_acc <= 1.0)) {
    throw InvalidArgument("target_train_acc must be in (0, 1]");
  }
  loss.validate();
  drop.validate();
}

TrainConfig parse_train_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config: invalid JSON: ") + e.what());
  }
  TrainConfig cfg;
  try {
    reject_unknown(j,
                   {"optimizer", "batch_size", "epochs", "lr_milestones", "loss", "drop", "mask_placement",
                    "seed", "dataset", "eval_every", "model_widths", "record_wall_ms", "track_train_acc",
                    "target_train_acc"},
                   "config");
    if (j.contains("optimizer")) parse_optimizer(j["optimizer"], cfg.optimizer);
    read(j, "batch_size", cfg.batch_size);
    read(j, "epochs", cfg.epochs);
    if (j.contains("lr_milestones")) {
      cfg.lr_milestones.clear();
      for (const auto& m : j["lr_milestones"]) {
        reject_unknown(m, {"epoch", "factor"}, "lr_milestones[]");
        cfg.lr_milestones.push_back({m.at("epoch").get<std::size_t>(), m.at("factor").get<double>()});
      }
    }
    if (j.contains("loss")) parse_loss(j["loss"], cfg.loss);
    if (j.contains("drop")) parse_drop(j["drop"], cfg.drop);
    read(j, "mask_placement", cfg.mask_placement);
    read(j, "seed", cfg.seed);
    if (j.contains("dataset")) parse_dataset(j["dataset"], cfg.dataset);
    read(j, "eval_every", cfg.eval_every);
    read(j, "model_widths", cfg.model_widths);
    read(j, "record_wall_ms", cfg.record_wall_ms);
    read(j, "track_train_acc", cfg.track_train_acc);
    if (j.contains("target_train_acc") && !j["target_train_acc"].is_null()) {
      cfg.target_train_acc = j["target_train_acc"].get<double>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string train_config_to_json(const TrainConfig& c, int indent) {
  json j;
  j["optimizer"] = {{"lr", c.optimizer.lr}, {"momentum", c.optimizer.momentum},
                    {"weight_decay", c.optimizer.weight_decay}};
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr_milestones"] = json::array();
  for (const auto& m : c.lr_milestones) j["lr_milestones"].push_back({{"epoch", m.epoch}, {"factor", m.factor}});
  j["loss"] = {{"alpha", c.loss.alpha}, {"temperature", c.loss.temperature},
               {"detach_peer", c.loss.detach_peer}, {"tempered_ce", c.loss.tempered_ce}};
  json schedule = {{"kind", c.drop.schedule.kind == DropSchedule::Kind::Constant ? "constant" : "linear_ramp"}};
  if (c.drop.schedule.kind == DropSchedule::Kind::LinearRamp) schedule["target"] = c.drop.schedule.target;
  j["drop"] = {{"method", std::string(to_string(c.drop.method))},
               {"p", c.drop.p},
               {"b_size", c.drop.b_size},
               {"gamma_mode", std::string(to_string(c.drop.gamma_mode))},
               {"center_region", std::string(to_string(c.drop.center_region))},
               {"schedule", schedule},
               {"per_sample", c.drop.per_sample}};
  j["mask_placement"] = c.mask_placement;
  j["seed"] = c.seed;
  if (c.dataset.kind == DatasetConfig::Kind::Synthetic) {
    const auto& s = c.dataset.synthetic;
    j["dataset"] = {{"kind", "synthetic"}, {"classes", s.classes},   {"per_class", s.per_class},
                    {"test_per_class", c.dataset.test_per_class},    {"channels", s.channels},
                    {"height", s.height},  {"width", s.width},       {"noise", s.noise},
                    {"seed", s.seed}};
  } else {
    j["dataset"] = {{"kind", "cifar10"},
                    {"path", c.dataset.path},
                    {"standardize", c.dataset.standardize},
                    {"limit_train", c.dataset.limit_train},
                    {"limit_test", c.dataset.limit_test}};
  }
  j["eval_every"] = c.eval_every;
  j["model_widths"] = c.model_widths;
  j["record_wall_ms"] = c.record_wall_ms;
  j["track_train_acc"] = c.track_train_acc;
  j["target_train_acc"] = c.target_train_acc ? json(*c.target_train_acc) : json(nullptr);
  return j.dump(indent);
}

DatasetSplit load_dataset(const DatasetConfig& cfg) {
  if (cfg.kind == DatasetConfig::Kind::Cifar10) {
    auto split = load_cifar10(cfg.path, cfg.standardize);
    split.train = truncate(std::move(split.train), cfg.limit_train);
    split.test = truncate(std::move(split.test), cfg.limit_test);
    return split;
  }
  SyntheticSpec test = cfg.synthetic;
  test.per_class = cfg.test_per_class;
  test.split = cfg.synthetic.split + 1;
  return {make_synthetic(cfg.synthetic), make_synthetic(test)};
}

}  // namespace rblock
