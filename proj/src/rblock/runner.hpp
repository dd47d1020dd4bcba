// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rblock/config.hpp"
#include "rblock/gamma.hpp"
#include "rblock/masks.hpp"
#include "rblock/trainer.hpp"

namespace rblock {

inline constexpr std::array<unsigned, 5> kStagePercents{20, 40, 60, 80, 100};

struct StageRow {
  std::string method;
  double p = 0.0;
  std::array<double, 5> stages{};  // best-so-far val accuracy at each stage
};

// Epoch count (1-based) closing a stage: ceil(percent * epochs / 100), min 1.
std::size_t stage_epoch(unsigned percent, std::size_t epochs);
StageRow stage_row(const DropSpec& spec, std::span<const MetricsRow> metrics, std::size_t epochs);

std::string stages_csv(std::span<const StageRow> rows);

// Six sub-model strategies with their reference drop rates.
std::vector<DropSpec> default_comparison_methods(const DropSpec& base);
// "name" or "name:p"; names without p take the reference rate for that method.
std::vector<DropSpec> parse_method_list(std::string_view list, const DropSpec& base);

struct ReferenceStageRow {
  DropMethod method;
  double p;
  std::array<double, 5> stages;
};
// Reference top-1 (%) stage table for CIFAR-100 / ResNet-18.
std::span<const ReferenceStageRow> reference_stage_table();

struct ComparisonResult {
  std::vector<StageRow> rows;
  std::vector<TrainResult> runs;
};

/// Trains every method on the same data with the same seed. on_row fires after
/// each finished method so callers can persist partial tables.
ComparisonResult run_comparison(std::span<const DropSpec> methods, const TrainConfig& cfg,
                                const DatasetSplit& data,
                                const std::function<void(const StageRow&, const TrainResult&)>& on_row = {});

// Desk ordering against the reference table: ranks and Kendall tau per stage.
nlohmann::json ordering_report(std::span<const StageRow> rows);

// SHA-1 over "blob <size>\0" + bytes, lowercase hex (git object id).
std::string git_blob_sha1(std::span<const std::uint8_t> bytes);
std::string git_blob_sha1_file(const std::filesystem::path& path);

// ---- command bodies; each returns the machine-readable result ----

struct GammaRequest {
  double p = 0.0;
  std::size_t b_size = 3;
  std::optional<std::size_t> m;
  std::optional<std::size_t> n;
  GammaMode mode = GammaMode::Simple;
  double tol = 1e-12;
};
nlohmann::json gamma_report(const GammaRequest& req);

// Export object: shape [m, n, c]; keep arrays flattened in that same order.
nlohmann::json mask_export(DropMethod method, const MaskShape& shape, double p, std::size_t b_size,
                           GammaMode gamma_mode, std::uint64_t seed);

struct VerifyRequest {
  std::optional<DropMethod> method;  // unset: single-pattern check at `gamma`
  double gamma = 0.0;
  double p = 0.2;
  std::size_t m = 12;
  std::size_t n = 12;
  std::size_t c = 1;
  std::size_t b_size = 3;
  std::uint64_t trials = 100000;
  std::uint64_t seed = 0;
  GammaMode gamma_mode = GammaMode::Corrected;
  CenterRegion center_region = CenterRegion::Full;
  unsigned threads = 1;
};
// Carries "pass": true/false, or null when no analytic value exists.
nlohmann::json verify_report(const VerifyRequest& req);

nlohmann::json train_command(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                             std::optional<std::uint64_t> seed);
nlohmann::json compare_command(const std::filesystem::path& config_path, std::string_view methods,
                               const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed);

}  // namespace rblock
