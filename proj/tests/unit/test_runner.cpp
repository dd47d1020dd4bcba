// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rblock/error.hpp"
#include "rblock/runner.hpp"

using namespace rblock;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<MetricsRow> rising_metrics(std::size_t epochs) {
  std::vector<MetricsRow> rows(epochs);
  for (std::size_t e = 0; e < epochs; ++e) {
    rows[e].epoch = e + 1;
    rows[e].val_acc = (e % 2 == 0) ? 0.1 * static_cast<double>(e) : 0.05;
    rows[e].best_val_acc = e == 0 ? rows[e].val_acc : std::max(rows[e - 1].best_val_acc, rows[e].val_acc);
  }
  return rows;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rblock_runner_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const char* kTinyConfig = R"({
  "epochs": 2, "batch_size": 8, "seed": 3,
  "optimizer": {"lr": 0.01},
  "lr_milestones": [],
  "model_widths": [4, 6, 8],
  "drop": {"method": "bdropdml", "p": 0.2},
  "dataset": {"kind": "synthetic", "per_class": 8, "test_per_class": 4, "height": 8, "width": 8}
})";

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("stage epochs") {
    CHECK(stage_epoch(20, 10) == 2);
    CHECK(stage_epoch(100, 10) == 10);
    CHECK(stage_epoch(20, 3) == 1);
    CHECK(stage_epoch(40, 7) == 3);
    CHECK(stage_epoch(20, 1) == 1);
    CHECK(stage_epoch(60, 200) == 120);
  }

  TEST_CASE("stage rows are non-decreasing") {
    DropSpec spec;
    spec.method = DropMethod::SDropDML;
    const auto metrics = rising_metrics(10);
    const StageRow row = stage_row(spec, metrics, 10);
    CHECK(row.method == "sdropdml");
    CHECK(row.stages[0] == metrics[1].best_val_acc);
    CHECK(row.stages[4] == metrics[9].best_val_acc);
    for (std::size_t s = 1; s < 5; ++s) CHECK(row.stages[s] >= row.stages[s - 1]);
    // An early-stopped run holds its last value for later stages.
    const StageRow shortrow = stage_row(spec, std::span(metrics).first(4), 10);
    CHECK(shortrow.stages[4] == metrics[3].best_val_acc);
    const std::string csv = stages_csv(std::vector<StageRow>{row});
    CHECK(csv.rfind("method,p,stage20,stage40,stage60,stage80,stage100\n", 0) == 0);
    CHECK(csv.find("sdropdml,") != std::string::npos);
  }

  TEST_CASE("method lists") {
    const DropSpec base;
    const auto def = default_comparison_methods(base);
    REQUIRE(def.size() == 6);
    CHECK(def[0].method == DropMethod::RDropPair);
    CHECK(def[0].p == 0.5);
    CHECK(def[1].method == DropMethod::CDropPair);
    CHECK(def[2].p == 0.1);
    CHECK(def[3].p == 0.1);
    CHECK(def[4].method == DropMethod::BDropDML);
    CHECK(def[4].p == 0.2);
    CHECK(def[5].p == 0.2);
    CHECK(parse_method_list("", base).size() == 6);
    CHECK(parse_method_list("all", base).size() == 6);
    const auto two = parse_method_list("bdropdml:0.3, rdrop", base);
    REQUIRE(two.size() == 2);
    CHECK(two[0].p == 0.3);
    CHECK(two[1].method == DropMethod::RDropPair);
    CHECK(two[1].p == 0.5);
    CHECK_THROWS_AS(parse_method_list("warp", base), InvalidArgument);
    CHECK_THROWS_AS(parse_method_list("rdrop:abc", base), InvalidArgument);
    CHECK_THROWS_AS(parse_method_list("rdrop:1.5", base), InvalidArgument);
  }

  TEST_CASE("reference stage table") {
    const auto table = reference_stage_table();
    REQUIRE(table.size() == 6);
    CHECK(table[0].stages[0] == 54.93);
    CHECK(table[1].stages[4] == 71.30);
    CHECK(table[2].stages[3] == 71.41);
    CHECK(table[3].stages[2] == 70.30);
    CHECK(table[4].stages[4] == 72.35);
    CHECK(table[5].stages[0] == 58.19);
    for (const auto& r : table)
      for (std::size_t s = 1; s < 5; ++s) CHECK(r.stages[s] >= r.stages[s - 1]);
  }

  TEST_CASE("ordering report") {
    std::vector<StageRow> same, reversed;
    for (const auto& r : reference_stage_table()) {
      StageRow a{std::string(to_string(r.method)), r.p, {}};
      StageRow b = a;
      for (std::size_t s = 0; s < 5; ++s) {
        a.stages[s] = r.stages[s] / 100.0;
        b.stages[s] = 1.0 - r.stages[s] / 100.0;
      }
      same.push_back(a);
      reversed.push_back(b);
    }
    const json up = ordering_report(same);
    CHECK(up["asserted"] == false);
    CHECK(up["methods_compared"] == 6);
    CHECK(up["stages"][4]["kendall_tau"].get<double>() == 1.0);
    CHECK(up["stages"][4]["desk_order"] == up["stages"][4]["reference_order"]);
    CHECK(up["rblock_ge_rdropblock_final"] == true);
    CHECK(ordering_report(reversed)["stages"][0]["kendall_tau"].get<double>() == -1.0);
    CHECK(up["reference_table"].size() == 6);
    CHECK(ordering_report(std::vector<StageRow>{})["rblock_ge_rdropblock_final"].is_null());
  }

  TEST_CASE("git blob sha1") {
    CHECK(git_blob_sha1({}) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    const std::string hello = "hello\n";
    CHECK(git_blob_sha1(std::span(reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size())) ==
          "ce013625030ba8dba906f756967f9e9ca394464a");
    CHECK_THROWS_AS(git_blob_sha1_file("/nonexistent/blob"), InvalidArgument);
  }

  TEST_CASE("gamma report") {
    GammaRequest req;
    req.p = 0.2;
    req.b_size = 3;
    const json simple = gamma_report(req);
    CHECK(std::fabs(simple["gamma"].get<double>() - 0.0222222) < 5e-8);
    req.mode = GammaMode::Corrected;
    CHECK_THROWS_AS(gamma_report(req), InvalidArgument);
    req.m = 32;
    req.n = 32;
    CHECK(std::fabs(gamma_report(req)["gamma"].get<double>() - 0.0252840) < 5e-8);
    req.mode = GammaMode::Exact;
    req.p = 0.5;
    req.tol = 1e-10;
    const json exact = gamma_report(req);
    CHECK(exact["residual"].get<double>() <= 1e-10);
    CHECK(exact["p2"].get<double>() <= 0.5);
    CHECK(exact["p1"].get<double>() >= 0.5);
    req.m = 6;
    CHECK_THROWS_AS(gamma_report(req), GeometryError);
  }

  TEST_CASE("mask export layout") {
    const json spatial = mask_export(DropMethod::SpatialDropout, {3, 4, 5}, 0.5, 3, GammaMode::Corrected, 9);
    CHECK(spatial["shape"] == json::array({3, 4, 5}));
    CHECK(spatial["keep2"].is_null());
    const auto& k = spatial["keep1"];
    REQUIRE(k.size() == 60);
    // Channel is the fastest index: every (i, j) repeats the channel values.
    for (std::size_t u = 1; u < 12; ++u)
      for (std::size_t c = 0; c < 5; ++c) CHECK(k[u * 5 + c] == k[c]);
    const json pair = mask_export(DropMethod::SDropDML, {8, 8, 2}, 0.5, 3, GammaMode::Corrected, 9);
    CHECK(pair["keep2"].size() == 128);
    CHECK(pair == mask_export(DropMethod::SDropDML, {8, 8, 2}, 0.5, 3, GammaMode::Corrected, 9));
    CHECK_FALSE(pair == mask_export(DropMethod::SDropDML, {8, 8, 2}, 0.5, 3, GammaMode::Corrected, 10));
  }

  TEST_CASE("verify: pattern and method modes") {
    VerifyRequest req;
    req.gamma = 0.05;
    req.trials = 20000;
    req.seed = 1;
    const json pat = verify_report(req);
    CHECK(pat["kind"] == "pattern");
    CHECK(pat["pass"] == true);

    req.m = 5;
    req.n = 5;
    const json small = verify_report(req);
    CHECK(small["pass"].is_null());
    CHECK(small["analytic_p"].is_null());

    req.trials = 10;
    CHECK_THROWS_AS(verify_report(req), InvalidArgument);

    VerifyRequest mreq;
    mreq.method = DropMethod::SDropDML;
    mreq.m = 16;
    mreq.n = 16;
    mreq.c = 4;
    mreq.trials = 4000;
    const json m = verify_report(mreq);
    CHECK(m["pass"] == true);
    CHECK(m.contains("mask1"));
    CHECK(m.contains("mask2"));
  }

  TEST_CASE("train and compare commands write their artifacts") {
    const fs::path dir = scratch("cmds");
    {
      std::ofstream(dir / "tiny.json") << kTinyConfig;
    }
    const json summary = train_command(dir / "tiny.json", dir / "train", std::nullopt);
    CHECK(summary["status"] == "completed");
    for (const char* f : {"metrics.csv", "manifest.json", "final.rblk", "last_good.rblk", "best.rblk"})
      CHECK(fs::exists(dir / "train" / f));
    const json manifest = json::parse(slurp(dir / "train" / "manifest.json"));
    CHECK(manifest["inputs"]["config"]["git_sha1"] == git_blob_sha1_file(dir / "tiny.json"));
    CHECK(manifest["seed"] == 3);

    const json reseeded = train_command(dir / "tiny.json", dir / "train7", 7);
    CHECK(reseeded["seed"] == 7);
    CHECK(slurp(dir / "train" / "metrics.csv") != slurp(dir / "train7" / "metrics.csv"));

    const json cmp = compare_command(dir / "tiny.json", "bdropdml,rdropblock", dir / "cmp", std::nullopt);
    CHECK(cmp["status"] == "completed");
    CHECK(fs::exists(dir / "cmp" / "stages.csv"));
    CHECK(fs::exists(dir / "cmp" / "metrics_bdropdml.csv"));
    const json cm = json::parse(slurp(dir / "cmp" / "manifest.json"));
    CHECK(cm["ordering_vs_reference"]["asserted"] == false);

    CHECK_THROWS_AS(train_command(dir / "missing.json", dir / "x", std::nullopt), InvalidArgument);
    {
      std::ofstream(dir / "bad.json") << R"({"epochs": 2, "unknown_key": 1})";
    }
    CHECK_THROWS_AS(train_command(dir / "bad.json", dir / "y", std::nullopt), FormatError);
    fs::remove_all(dir);
  }
}
