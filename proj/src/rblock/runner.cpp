// SPDX-License-Identifier: Apache-2.0
#include "rblock/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <thread>

#include <openssl/evp.h>

#include "rblock/checkpoint.hpp"
#include "rblock/error.hpp"

namespace rblock {
namespace {

using nlohmann::json;

constexpr std::uint64_t kVerifyChunk = 256;

std::string fmt_num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double reference_p(DropMethod m) {
  switch (m) {
    case DropMethod::RDropPair:
    case DropMethod::CDropPair:
      return 0.5;
    case DropMethod::RSpatialPair:
    case DropMethod::RDropBlockPair:
      return 0.1;
    case DropMethod::BDropDML:
    case DropMethod::SDropDML:
      return 0.2;
    default:
      return 0.0;
  }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidArgument("cannot write '" + tmp.string() + "'");
    f << text;
  }
  std::filesystem::rename(tmp, path);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw InvalidArgument("cannot create output directory '" + dir.string() + "'");
  }
}

double plane_mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Analytic per-unit drop marginal of each mask in a (possibly single) draw.
std::pair<double, double> analytic_marginals(const DropSpec& spec, const MaskShape& shape) {
  const BlockGeometry geom = shape.geometry(spec.b_size);
  switch (spec.method) {
    case DropMethod::None:
      return {0.0, 0.0};
    case DropMethod::Dropout:
    case DropMethod::SpatialDropout:
    case DropMethod::RDropPair:
    case DropMethod::RSpatialPair:
      return {spec.p, spec.p};
    case DropMethod::CDropPair:
      return {0.5, 0.5};
    case DropMethod::DropBlock:
    case DropMethod::RDropBlockPair: {
      const double q = plane_mean(unit_drop_probability_map(block_gamma(spec, geom), geom, spec.center_region));
      return {q, q};
    }
    case DropMethod::BDropDML: {
      const double q = plane_mean(unit_drop_probability_map(block_gamma(spec, geom), geom, spec.center_region));
      return {0.5 * q, 0.5 * q};
    }
    case DropMethod::SDropDML: {
      const double h =
          plane_mean(unit_drop_probability_map(half_coverage_gamma(geom), geom, spec.center_region));
      return {spec.p * h, spec.p * (1.0 - h)};
    }
  }
  return {0.0, 0.0};
}

struct ChunkStats {
  std::uint64_t drops1 = 0, drops2 = 0;
  double sq1 = 0.0, sq2 = 0.0;  // sum of squared per-draw drop fractions
};

std::size_t count_zero(const Tensor4& t) {
  return static_cast<std::size_t>(std::ranges::count(t.data(), 0.0));
}

json mask_array(const Tensor4& keep, const MaskShape& shape) {
  json arr = json::array();
  for (std::size_t i = 0; i < shape.m; ++i) {
    for (std::size_t j = 0; j < shape.n; ++j) {
      for (std::size_t c = 0; c < shape.c; ++c) arr.push_back(keep.at(0, c, i, j));
    }
  }
  return arr;
}

json dataset_summary(const DatasetSplit& d) {
  const Shape4 s = d.train.images.shape();
  return {{"train_size", d.train.size()}, {"test_size", d.test.size()}, {"classes", d.train.classes},
          {"sample_shape", {s.c, s.h, s.w}}};
}

json inputs_manifest(const std::filesystem::path& config_path, const TrainConfig& cfg) {
  json inputs = {{"config", {{"path", config_path.filename().string()},
                             {"git_sha1", git_blob_sha1_file(config_path)}}}};
  if (cfg.dataset.kind == DatasetConfig::Kind::Cifar10) {
    json files = json::object();
    const std::filesystem::path dir(cfg.dataset.path);
    for (const char* name : {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                             "data_batch_5.bin", "test_batch.bin"}) {
      files[name] = git_blob_sha1_file(dir / name);
    }
    inputs["dataset_files"] = files;
  }
  return inputs;
}

}  // namespace

std::size_t stage_epoch(unsigned percent, std::size_t epochs) {
  const std::size_t e = (static_cast<std::size_t>(percent) * epochs + 99) / 100;
  return std::max<std::size_t>(e, 1);
}

StageRow stage_row(const DropSpec& spec, std::span<const MetricsRow> metrics, std::size_t epochs) {
  StageRow row;
  row.method = std::string(to_string(spec.method));
  row.p = spec.p;
  if (metrics.empty()) return row;
  for (std::size_t s = 0; s < kStagePercents.size(); ++s) {
    const std::size_t e = std::min(stage_epoch(kStagePercents[s], epochs), metrics.size());
    row.stages[s] = metrics[e - 1].best_val_acc;
  }
  return row;
}

std::string stages_csv(std::span<const StageRow> rows) {
  std::string out = "method,p,stage20,stage40,stage60,stage80,stage100\n";
  for (const auto& r : rows) {
    out += r.method + ',' + fmt_num(r.p);
    for (double v : r.stages) out += ',' + fmt_num(v);
    out += '\n';
  }
  return out;
}

std::vector<DropSpec> default_comparison_methods(const DropSpec& base) {
  std::vector<DropSpec> out;
  for (DropMethod m : {DropMethod::RDropPair, DropMethod::CDropPair, DropMethod::RSpatialPair,
                       DropMethod::RDropBlockPair, DropMethod::BDropDML, DropMethod::SDropDML}) {
    DropSpec s = base;
    s.method = m;
    s.p = reference_p(m);
    s.schedule = {};
    out.push_back(s);
  }
  return out;
}

std::vector<DropSpec> parse_method_list(std::string_view list, const DropSpec& base) {
  if (list.empty() || list == "all") return default_comparison_methods(base);
  std::vector<DropSpec> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    std::string_view item = list.substr(pos, comma - pos);
    pos = comma + 1;
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) throw InvalidArgument("empty entry in method list '" + std::string(list) + "'");
    DropSpec s = base;
    s.schedule = {};
    const auto colon = item.find(':');
    s.method = parse_drop_method(item.substr(0, colon));
    if (colon == std::string_view::npos) {
      s.p = is_pair_method(s.method) ? reference_p(s.method) : base.p;
      if (s.method == DropMethod::None) s.p = 0.0;
    } else {
      const std::string num(item.substr(colon + 1));
      std::size_t used = 0;
      try {
        s.p = std::stod(num, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != num.size() || num.empty()) throw InvalidArgument("bad drop rate in '" + std::string(item) + "'");
    }
    s.validate();
    out.push_back(s);
    if (comma == list.size()) break;
  }
  return out;
}

std::span<const ReferenceStageRow> reference_stage_table() {
  static const std::array<ReferenceStageRow, 6> table{{
      {DropMethod::RDropPair, 0.5, {54.93, 68.88, 68.99, 70.81, 71.17}},
      {DropMethod::CDropPair, 0.5, {54.60, 69.50, 69.70, 71.03, 71.30}},
      {DropMethod::RSpatialPair, 0.1, {55.80, 69.83, 69.98, 71.41, 71.86}},
      {DropMethod::RDropBlockPair, 0.1, {56.20, 69.81, 70.30, 71.15, 71.60}},
      {DropMethod::BDropDML, 0.2, {56.83, 70.21, 70.83, 71.98, 72.35}},
      {DropMethod::SDropDML, 0.2, {58.19, 70.15, 70.31, 71.49, 72.08}},
  }};
  return table;
}

ComparisonResult run_comparison(std::span<const DropSpec> methods, const TrainConfig& cfg,
                                const DatasetSplit& data,
                                const std::function<void(const StageRow&, const TrainResult&)>& on_row) {
  if (methods.empty()) throw InvalidArgument("comparison needs at least one method");
  ComparisonResult out;
  for (const auto& spec : methods) {
    TrainConfig run_cfg = cfg;
    run_cfg.drop = spec;
    Network net = build_network(run_cfg, data.train);
    TrainResult res = train(net, data, run_cfg);
    StageRow row = stage_row(spec, res.metrics, run_cfg.epochs);
    if (on_row) on_row(row, res);
    out.rows.push_back(std::move(row));
    out.runs.push_back(std::move(res));
  }
  return out;
}

json ordering_report(std::span<const StageRow> rows) {
  json report = json::object();
  std::vector<std::pair<const StageRow*, const ReferenceStageRow*>> common;
  for (const auto& r : rows) {
    for (const auto& ref : reference_stage_table()) {
      if (r.method == to_string(ref.method)) {
        common.emplace_back(&r, &ref);
        break;
      }
    }
  }
  report["methods_compared"] = common.size();
  json stages = json::array();
  for (std::size_t s = 0; s < kStagePercents.size(); ++s) {
    auto rank_by = [&](auto value) {
      std::vector<std::size_t> idx(common.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return value(a) > value(b); });
      json names = json::array();
      for (std::size_t i : idx) names.push_back(common[i].first->method);
      return names;
    };
    auto desk = [&](std::size_t i) { return common[i].first->stages[s]; };
    auto ref = [&](std::size_t i) { return common[i].second->stages[s]; };
    long concordant = 0, discordant = 0;
    for (std::size_t a = 0; a < common.size(); ++a) {
      for (std::size_t b = a + 1; b < common.size(); ++b) {
        const double d = (desk(a) - desk(b)) * (ref(a) - ref(b));
        concordant += d > 0 ? 1 : 0;
        discordant += d < 0 ? 1 : 0;
      }
    }
    const long pairs = static_cast<long>(common.size() * (common.size() - 1) / 2);
    stages.push_back({{"stage", kStagePercents[s]},
                      {"desk_order", rank_by(desk)},
                      {"reference_order", rank_by(ref)},
                      {"kendall_tau", pairs ? json(static_cast<double>(concordant - discordant) /
                                                   static_cast<double>(pairs))
                                            : json(nullptr)}});
  }
  report["stages"] = stages;

  auto final_of = [&](DropMethod m) -> std::optional<double> {
    for (const auto& r : rows) {
      if (r.method == to_string(m)) return r.stages.back();
    }
    return std::nullopt;
  };
  const auto db = final_of(DropMethod::RDropBlockPair);
  const auto b = final_of(DropMethod::BDropDML);
  const auto sd = final_of(DropMethod::SDropDML);
  report["rblock_ge_rdropblock_final"] = (db && b && sd) ? json(*b >= *db && *sd >= *db) : json(nullptr);
  json ref_rows = json::array();
  for (const auto& r : reference_stage_table()) {
    ref_rows.push_back({{"method", std::string(to_string(r.method))}, {"p", r.p}, {"top1_percent", r.stages}});
  }
  report["reference_table"] = ref_rows;
  report["asserted"] = false;
  return report;
}

std::string git_blob_sha1(std::span<const std::uint8_t> bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error(ErrorKind::Numerical, "SHA-1 context allocation failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error(ErrorKind::Numerical, "SHA-1 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string git_blob_sha1_file(const std::filesystem::path& path) { return git_blob_sha1(read_bytes(path)); }

json gamma_report(const GammaRequest& req) {
  if (!(req.p >= 0.0 && req.p < 1.0)) throw InvalidArgument("--p must be in [0, 1)");
  if (!(req.tol > 0.0)) throw InvalidArgument("--tol must be > 0");
  json out = {{"mode", std::string(to_string(req.mode))}, {"p", req.p}, {"b_size", req.b_size}};
  if (req.mode == GammaMode::Simple) {
    BlockGeometry{1, 1, req.b_size}.validate();
    out["gamma"] = gamma_simple(req.p, req.b_size);
    if (req.m) out["m"] = *req.m;
    if (req.n) out["n"] = *req.n;
    return out;
  }
  if (!req.m || !req.n) {
    throw InvalidArgument(std::string(to_string(req.mode)) + " mode needs --m and --n");
  }
  const BlockGeometry geom{*req.m, *req.n, req.b_size};
  geom.validate_fits();
  out["m"] = geom.m;
  out["n"] = geom.n;
  if (req.mode == GammaMode::Corrected) {
    out["gamma"] = gamma_corrected(req.p, geom);
    return out;
  }
  geom.require_exact();
  const double g = solve_gamma_exact(req.p, geom, req.tol);
  const double pe = p_exact(g, geom);
  out["gamma"] = g;
  out["tol"] = req.tol;
  out["p_exact"] = pe;
  out["p1"] = p_no_margin(g, geom.b_size);
  out["p2"] = p_valid_region(g, geom);
  out["residual"] = std::fabs(pe - req.p);
  return out;
}

json mask_export(DropMethod method, const MaskShape& shape, double p, std::size_t b_size, GammaMode gamma_mode,
                 std::uint64_t seed) {
  if (shape.m == 0 || shape.n == 0 || shape.c == 0) throw InvalidArgument("mask shape must be positive");
  DropSpec spec;
  spec.method = method;
  spec.p = p;
  spec.b_size = b_size;
  spec.gamma_mode = gamma_mode;
  spec.validate();
  if (method == DropMethod::DropBlock || method == DropMethod::RDropBlockPair || method == DropMethod::BDropDML ||
      method == DropMethod::SDropDML) {
    shape.geometry(b_size).validate_fits();
  }
  RngStream rng(seed, 0);
  json out = {{"shape", {shape.m, shape.n, shape.c}}, {"method", std::string(to_string(method))},
              {"p", p}, {"b_size", b_size}};
  if (is_pair_method(method)) {
    const MaskPair pair = sample_pair(shape, spec, rng);
    out["keep1"] = mask_array(pair.keep1, shape);
    out["keep2"] = mask_array(pair.keep2, shape);
    out["scale1"] = pair.scale1;
    out["scale2"] = pair.scale2;
  } else {
    const KeepMask km = sample_single(shape, spec, rng);
    out["keep1"] = mask_array(km.keep, shape);
    out["keep2"] = nullptr;
    out["scale1"] = km.scale;
    out["scale2"] = nullptr;
  }
  out["seed"] = seed;
  return out;
}

json verify_report(const VerifyRequest& req) {
  if (req.trials < 1000) throw InvalidArgument("verify needs at least 1000 trials");
  const unsigned threads = std::max(1u, req.threads);
  const RngStream rng(req.seed, 0);

  if (!req.method) {
    if (!(req.gamma >= 0.0 && req.gamma <= 1.0)) throw InvalidArgument("--gamma must be in [0, 1]");
    const BlockGeometry geom{req.m, req.n, req.b_size};
    geom.validate_fits();
    const MaskStatsReport rep = mc_drop_rate(req.gamma, geom, req.trials, rng, req.center_region, threads);
    json out = json::parse(report_to_json(rep));
    out["kind"] = "pattern";
    out["seed"] = req.seed;
    out["sigma_used"] = "exact";
    if (rep.analytic_p) {
      const double bound = 3.0 * rep.sigma_exact;
      out["threshold"] = bound;
      out["pass"] = *rep.abs_deviation <= bound;
    } else {
      out["threshold"] = nullptr;
      out["pass"] = nullptr;
    }
    return out;
  }

  DropSpec spec;
  spec.method = *req.method;
  spec.p = req.p;
  spec.b_size = req.b_size;
  spec.gamma_mode = req.gamma_mode;
  spec.center_region = req.center_region;
  spec.validate();
  const MaskShape shape{req.m, req.n, req.c};
  shape.geometry(req.b_size).validate_fits();
  const bool pair = is_pair_method(spec.method);
  const auto [a1, a2] = analytic_marginals(spec, shape);

  const std::uint64_t chunks = (req.trials + kVerifyChunk - 1) / kVerifyChunk;
  std::vector<ChunkStats> stats(chunks);
  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&](std::exception_ptr& err) {
    try {
      for (std::uint64_t c = next++; c < chunks && !failed; c = next++) {
        RngStream r = rng.split(c);
        const std::uint64_t end = std::min(req.trials, (c + 1) * kVerifyChunk);
        const double units = static_cast<double>(shape.m * shape.n * shape.c);
        ChunkStats& s = stats[c];
        for (std::uint64_t t = c * kVerifyChunk; t < end; ++t) {
          std::size_t d1 = 0, d2 = 0;
          if (pair) {
            const MaskPair mp = sample_pair(shape, spec, r);
            d1 = count_zero(mp.keep1);
            d2 = count_zero(mp.keep2);
          } else {
            d1 = count_zero(sample_single(shape, spec, r).keep);
          }
          s.drops1 += d1;
          s.drops2 += d2;
          s.sq1 += (static_cast<double>(d1) / units) * (static_cast<double>(d1) / units);
          s.sq2 += (static_cast<double>(d2) / units) * (static_cast<double>(d2) / units);
        }
      }
    } catch (...) {
      err = std::current_exception();
      failed = true;
    }
  };
  {
    const unsigned nthreads = static_cast<unsigned>(std::min<std::uint64_t>(threads, chunks));
    std::vector<std::exception_ptr> errs(nthreads);
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back([&, t] { worker(errs[t]); });
    pool.clear();
    for (auto& e : errs) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::uint64_t drops1 = 0, drops2 = 0;
  double sq1 = 0.0, sq2 = 0.0;
  for (const auto& s : stats) {
    drops1 += s.drops1;
    drops2 += s.drops2;
    sq1 += s.sq1;
    sq2 += s.sq2;
  }
  const double trials = static_cast<double>(req.trials);
  const double units = static_cast<double>(shape.m * shape.n * shape.c);
  auto summarize = [&](std::uint64_t drops, double sq, double analytic) {
    const double mean = static_cast<double>(drops) / (units * trials);
    const double var = std::max(0.0, sq / trials - mean * mean) * trials / (trials - 1.0);
    const double sigma = std::sqrt(var / trials);
    const double dev = std::fabs(mean - analytic);
    return json{{"analytic_p", analytic}, {"empirical_p", mean}, {"abs_deviation", dev},
                {"sigma_empirical", sigma}, {"threshold", 3.0 * sigma}, {"pass", dev <= 3.0 * sigma}};
  };
  json out = {{"kind", "method"},
              {"method", std::string(to_string(spec.method))},
              {"p", spec.p},
              {"b_size", spec.b_size},
              {"gamma_mode", std::string(to_string(spec.gamma_mode))},
              {"center_region", std::string(to_string(spec.center_region))},
              {"shape", {shape.m, shape.n, shape.c}},
              {"trials", req.trials},
              {"seed", req.seed},
              {"sigma_used", "empirical"}};
  json m1 = summarize(drops1, sq1, a1);
  bool pass = m1["pass"].get<bool>();
  out["mask1"] = m1;
  if (pair) {
    json m2 = summarize(drops2, sq2, a2);
    pass = pass && m2["pass"].get<bool>();
    out["mask2"] = m2;
  } else {
    out["mask2"] = nullptr;
  }
  out["pass"] = pass;
  return out;
}

json train_command(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                   std::optional<std::uint64_t> seed) {
  if (!std::filesystem::is_regular_file(config_path)) {
    throw InvalidArgument("config file '" + config_path.string() + "' not found");
  }
  TrainConfig cfg = load_train_config(config_path);
  if (seed) cfg.seed = *seed;
  const DatasetSplit data = load_dataset(cfg.dataset);
  ensure_dir(out_dir);

  const auto metrics_path = out_dir / "metrics.csv";
  const auto best_path = out_dir / "best.rblk";
  const auto final_path = out_dir / "final.rblk";
  const auto last_good_path = out_dir / "last_good.rblk";
  const auto manifest_path = out_dir / "manifest.json";

  Network net = build_network(cfg, data.train);
  std::vector<MetricsRow> rows;
  double best = -1.0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const MetricsRow& row, const Network& n) {
    rows.push_back(row);
    save_checkpoint(last_good_path, n.params());
    if (row.val_acc > best) {
      best = row.val_acc;
      save_checkpoint(best_path, n.params());
    }
    write_metrics_csv(metrics_path, rows);
  };

  json manifest = {{"command", "train"},
                   {"config", json::parse(train_config_to_json(cfg))},
                   {"inputs", inputs_manifest(config_path, cfg)},
                   {"trainer", is_pair_method(cfg.drop.method) ? "rblock" : "single"},
                   {"method", std::string(to_string(cfg.drop.method))},
                   {"seed", cfg.seed},
                   {"dataset", dataset_summary(data)}};
  json artifacts = {{"metrics", metrics_path.filename().string()},
                    {"last_good_checkpoint", last_good_path.filename().string()},
                    {"best_checkpoint", best_path.filename().string()}};
  try {
    const TrainResult res = train(net, data, cfg, hooks);
    save_checkpoint(final_path, net.params());
    write_metrics_csv(metrics_path, res.metrics);
    artifacts["final_checkpoint"] = final_path.filename().string();
    manifest["status"] = "completed";
    manifest["epochs_completed"] = res.metrics.size();
    manifest["steps"] = res.steps;
    manifest["degenerate_masks"] = res.degenerate_masks;
    manifest["final_val_acc"] = res.metrics.empty() ? 0.0 : res.metrics.back().val_acc;
    manifest["best_val_acc"] = res.metrics.empty() ? 0.0 : res.metrics.back().best_val_acc;
    manifest["reached_target_train_acc"] = res.reached_target;
    manifest["train_acc"] = res.train_acc.empty() ? json(nullptr) : json(res.train_acc.back());
    manifest["artifacts"] = artifacts;
    write_text(manifest_path, manifest.dump(2) + "\n");
  } catch (const Error& e) {
    write_metrics_csv(metrics_path, rows);
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    manifest["epochs_completed"] = rows.size();
    if (rows.empty()) artifacts.erase("last_good_checkpoint");
    if (best < 0) artifacts.erase("best_checkpoint");
    manifest["artifacts"] = artifacts;
    write_text(manifest_path, manifest.dump(2) + "\n");
    throw;
  }
  json summary = manifest;
  summary.erase("config");
  summary["out_dir"] = out_dir.string();
  summary["manifest"] = manifest_path.filename().string();
  return summary;
}

json compare_command(const std::filesystem::path& config_path, std::string_view methods,
                     const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed) {
  if (!std::filesystem::is_regular_file(config_path)) {
    throw InvalidArgument("config file '" + config_path.string() + "' not found");
  }
  TrainConfig cfg = load_train_config(config_path);
  if (seed) cfg.seed = *seed;
  const std::vector<DropSpec> specs = parse_method_list(methods, cfg.drop);
  const DatasetSplit data = load_dataset(cfg.dataset);
  ensure_dir(out_dir);
  const auto stages_path = out_dir / "stages.csv";
  const auto manifest_path = out_dir / "manifest.json";

  std::vector<StageRow> rows;
  json runs = json::array();
  json manifest = {{"command", "compare"},
                   {"config", json::parse(train_config_to_json(cfg))},
                   {"inputs", inputs_manifest(config_path, cfg)},
                   {"seed", cfg.seed},
                   {"dataset", dataset_summary(data)},
                   {"stage_percents", kStagePercents}};
  auto persist = [&](const std::string& status) {
    write_text(stages_path, stages_csv(rows));
    manifest["status"] = status;
    manifest["runs"] = runs;
    manifest["stages"] = stages_path.filename().string();
    manifest["ordering_vs_reference"] = ordering_report(rows);
    write_text(manifest_path, manifest.dump(2) + "\n");
  };
  try {
    run_comparison(specs, cfg, data, [&](const StageRow& row, const TrainResult& res) {
      rows.push_back(row);
      const std::string csv_name = "metrics_" + row.method + ".csv";
      write_metrics_csv(out_dir / csv_name, res.metrics);
      runs.push_back({{"method", row.method},
                      {"p", row.p},
                      {"metrics", csv_name},
                      {"epochs_completed", res.metrics.size()},
                      {"degenerate_masks", res.degenerate_masks},
                      {"stages", row.stages}});
      persist("running");
    });
  } catch (const Error& e) {
    manifest["error"] = e.what();
    persist("failed");
    throw;
  }
  persist("completed");
  json table = json::array();
  for (const auto& r : rows) table.push_back({{"method", r.method}, {"p", r.p}, {"stages", r.stages}});
  return {{"command", "compare"},
          {"status", "completed"},
          {"out_dir", out_dir.string()},
          {"stages_csv", stages_path.filename().string()},
          {"manifest", manifest_path.filename().string()},
          {"table", table},
          {"ordering_vs_reference", manifest["ordering_vs_reference"]}};
}

}  // namespace rblock
