// SPDX-License-Identifier: Apache-2.0
// rblock: gamma solving, mask sampling, Monte Carlo verification, training
// and the sub-model comparison table.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rblock/rblock.h"

namespace {

using nlohmann::json;

struct TextGuard {
  rb_text* text = nullptr;
  ~TextGuard() { rb_text_free(text); }
  json parse() const { return json::parse(rb_text_data(text)); }
};

int report_error(rb_status st) {
  std::cerr << "error: " << rb_last_error() << "\n";
  return static_cast<int>(st);
}

unsigned env_threads() {
  const char* v = std::getenv("RBLOCK_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  return (*end == '\0' && n > 0) ? static_cast<unsigned>(n) : 0;
}

std::string fixed7(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.7f", v);
  return buf;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

struct Common {
  bool json_out = false;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_flag("--json", c.json_out, "Print machine-readable JSON");
  cmd->add_option("--seed", c.seed, "Random seed");
}

struct GammaArgs {
  Common common;
  double p = 0.0;
  std::uint32_t bsize = 3;
  std::uint32_t m = 0, n = 0;
  std::string mode = "simple";
  double tol = 1e-12;
};

int run_gamma(const GammaArgs& a) {
  TextGuard out;
  if (const auto st = rb_gamma_report(a.p, a.bsize, a.m, a.n, a.mode.c_str(), a.tol, &out.text)) {
    return report_error(st);
  }
  const json j = out.parse();
  if (a.common.json_out) {
    std::cout << j.dump() << "\n";
    return 0;
  }
  std::cout << "gamma = " << fixed7(j["gamma"].get<double>()) << "\n";
  if (j.contains("residual")) {
    std::cout << "p1 (no margin)    = " << j["p1"].get<double>() << "\n"
              << "p2 (valid region) = " << j["p2"].get<double>() << "\n"
              << "residual          = " << j["residual"].get<double>() << "\n";
  }
  return 0;
}

struct MaskArgs {
  Common common;
  std::string method;
  std::uint32_t m = 16, n = 16, c = 1;
  double p = 0.2;
  std::uint32_t bsize = 3;
  std::string gamma_mode = "corrected";
  std::string out;
};

int run_mask_sample(const MaskArgs& a) {
  rb_mask* mask = nullptr;
  const std::uint64_t seed = a.common.seed.value_or(0);
  if (const auto st = rb_mask_sample(a.method.c_str(), a.m, a.n, a.c, a.p, a.bsize, a.gamma_mode.c_str(), seed,
                                     &mask)) {
    return report_error(st);
  }
  TextGuard text;
  const auto st = rb_mask_json(mask, &text.text);
  const bool pair = rb_mask_is_pair(mask) != 0;
  const double s1 = rb_mask_scale(mask, 1), s2 = rb_mask_scale(mask, 2);
  rb_mask_free(mask);
  if (st) return report_error(st);
  if (!a.out.empty()) {
    std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
    if (!f) {
      std::cerr << "error: cannot write '" << a.out << "'\n";
      return 1;
    }
    f << rb_text_data(text.text) << "\n";
  }
  if (a.common.json_out) {
    std::cout << rb_text_data(text.text) << "\n";
  } else {
    std::cout << a.method << " " << a.m << "x" << a.n << "x" << a.c << " p=" << a.p << " scale1=" << s1;
    if (pair) std::cout << " scale2=" << s2;
    std::cout << "\n";
    if (!a.out.empty()) std::cout << "wrote " << a.out << "\n";
  }
  return 0;
}

struct VerifyArgs {
  Common common;
  std::string method;
  double gamma = -1.0;
  double p = 0.2;
  std::uint32_t m = 12, n = 12, c = 1, bsize = 3;
  std::uint64_t trials = 100000;
  std::string gamma_mode = "corrected";
  std::string center_region = "full";
};

void print_mask_line(const char* label, const json& m) {
  std::cout << label << ": analytic " << m["analytic_p"].get<double>() << ", empirical "
            << m["empirical_p"].get<double>() << ", |dp| " << m["abs_deviation"].get<double>() << ", 3sigma "
            << m["threshold"].get<double>() << "\n";
}

int run_verify(const VerifyArgs& a) {
  if (a.method.empty() == (a.gamma < 0.0)) {
    std::cerr << "error: give exactly one of --method or --gamma\n";
    return 1;
  }
  rb_verify_options o;
  rb_verify_options_init(&o);
  o.method = a.method.empty() ? nullptr : a.method.c_str();
  o.gamma = a.gamma;
  o.p = a.p;
  o.m = a.m;
  o.n = a.n;
  o.c = a.c;
  o.b_size = a.bsize;
  o.trials = a.trials;
  o.seed = a.common.seed.value_or(0);
  o.gamma_mode = a.gamma_mode.c_str();
  o.center_region = a.center_region.c_str();
  o.threads = env_threads();
  int pass = 0;
  TextGuard out;
  if (const auto st = rb_verify(&o, &pass, &out.text)) return report_error(st);
  const json j = out.parse();
  if (a.common.json_out) {
    std::cout << j.dump() << "\n";
  } else if (j["kind"] == "pattern") {
    std::cout << "gamma " << j["gamma"].get<double>() << " on " << a.m << "x" << a.n << " b=" << a.bsize << ", "
              << j["trials"].get<std::uint64_t>() << " trials\n";
    std::cout << "empirical p = " << j["empirical_p"].get<double>() << "\n";
    if (!j["analytic_p"].is_null()) {
      std::cout << "analytic p  = " << j["analytic_p"].get<double>() << "\n"
                << "|dp| = " << j["abs_deviation"].get<double>() << ", 3 sigma = " << j["threshold"].get<double>()
                << "\n";
    } else {
      std::cout << "analytic p  = n/a (closed form needs m, n > 2 b)\n";
    }
    for (const char* r : {"interior", "corner", "edge"}) {
      const auto& v = j["region_means"][r];
      if (!v.is_null()) std::cout << "  " << r << " mean " << v.get<double>() << "\n";
    }
  } else {
    std::cout << j["method"].get<std::string>() << " p=" << a.p << ", " << j["trials"].get<std::uint64_t>()
              << " draws\n";
    print_mask_line("mask1", j["mask1"]);
    if (!j["mask2"].is_null()) print_mask_line("mask2", j["mask2"]);
  }
  if (!a.common.json_out) std::cout << (pass == 1 ? "PASS" : pass == 0 ? "FAIL" : "NO REFERENCE") << "\n";
  return pass == 0 ? 3 : 0;
}

struct TrainArgs {
  Common common;
  std::string config;
  std::string out = "rblock_run";
  std::string methods;
};

int run_train(const TrainArgs& a) {
  TextGuard out;
  const std::uint64_t* seed = a.common.seed ? &*a.common.seed : nullptr;
  if (const auto st = rb_train(a.config.c_str(), a.out.c_str(), seed, &out.text)) return report_error(st);
  const json j = out.parse();
  if (a.common.json_out) {
    std::cout << j.dump() << "\n";
    return 0;
  }
  std::cout << j["method"].get<std::string>() << ": " << j["epochs_completed"].get<std::size_t>()
            << " epochs, best val " << pct(j["best_val_acc"].get<double>()) << "%, final val "
            << pct(j["final_val_acc"].get<double>()) << "%\n"
            << "artifacts in " << a.out << "\n";
  return 0;
}

int run_compare(const TrainArgs& a) {
  TextGuard out;
  const std::uint64_t* seed = a.common.seed ? &*a.common.seed : nullptr;
  if (const auto st = rb_compare(a.config.c_str(), a.methods.c_str(), a.out.c_str(), seed, &out.text)) {
    return report_error(st);
  }
  const json j = out.parse();
  if (a.common.json_out) {
    std::cout << j.dump() << "\n";
    return 0;
  }
  std::printf("%-16s %5s %7s %7s %7s %7s %7s\n", "method", "p", "20%", "40%", "60%", "80%", "100%");
  for (const auto& row : j["table"]) {
    std::printf("%-16s %5.2f", row["method"].get<std::string>().c_str(), row["p"].get<double>());
    for (const auto& v : row["stages"]) std::printf(" %7s", pct(v.get<double>()).c_str());
    std::printf("\n");
  }
  std::cout << "stages.csv and manifest.json in " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"R-Block structured dropout toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rb_version());

  GammaArgs g;
  auto* gamma = app.add_subcommand("gamma", "Block-center probability for a target drop rate");
  gamma->add_option("--p", g.p, "Target per-unit drop probability")->required();
  gamma->add_option("--bsize", g.bsize, "Block size (odd)");
  gamma->add_option("--m", g.m, "Feature map height");
  gamma->add_option("--n", g.n, "Feature map width");
  gamma->add_option("--mode", g.mode, "simple | corrected | exact")
      ->check(CLI::IsMember({"simple", "corrected", "exact"}));
  gamma->add_option("--tol", g.tol, "Solver tolerance (exact mode)");
  add_common(gamma, g.common);

  MaskArgs mk;
  auto* mask = app.add_subcommand("mask", "Mask utilities");
  mask->require_subcommand(1);
  auto* sample = mask->add_subcommand("sample", "Sample one mask or mask pair and export it as JSON");
  sample->add_option("--method", mk.method, "Drop method")->required();
  sample->add_option("--m", mk.m, "Height");
  sample->add_option("--n", mk.n, "Width");
  sample->add_option("--c", mk.c, "Channels");
  sample->add_option("--p", mk.p, "Drop probability");
  sample->add_option("--bsize", mk.bsize, "Block size (odd)");
  sample->add_option("--gamma-mode", mk.gamma_mode, "simple | corrected | exact");
  sample->add_option("--out", mk.out, "Output JSON path");
  add_common(sample, mk.common);

  VerifyArgs v;
  auto* verify = app.add_subcommand("verify", "Monte Carlo check of drop rates against the analytic value");
  verify->add_option("--method", v.method, "Check the per-mask marginal of a sampler");
  verify->add_option("--gamma", v.gamma, "Check a single block pattern at this center probability");
  verify->add_option("--p", v.p, "Drop probability (with --method)");
  verify->add_option("--m", v.m, "Height");
  verify->add_option("--n", v.n, "Width");
  verify->add_option("--c", v.c, "Channels (with --method)");
  verify->add_option("--bsize", v.bsize, "Block size (odd)");
  verify->add_option("--trials", v.trials, "Number of sampled patterns");
  verify->add_option("--gamma-mode", v.gamma_mode, "simple | corrected | exact");
  verify->add_option("--center-region", v.center_region, "full | valid");
  add_common(verify, v.common);

  TrainArgs t;
  auto* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", t.config, "Config JSON")->required();
  train->add_option("--out", t.out, "Output directory");
  add_common(train, t.common);

  TrainArgs c;
  auto* compare = app.add_subcommand("compare", "Train several sub-model strategies and tabulate stages");
  compare->add_option("--config", c.config, "Config JSON")->required();
  compare->add_option("--methods", c.methods, "Comma list of method or method:p (default: six pair strategies)");
  compare->add_option("--out", c.out, "Output directory");
  add_common(compare, c.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gamma->parsed()) return run_gamma(g);
    if (sample->parsed()) return run_mask_sample(mk);
    if (verify->parsed()) return run_verify(v);
    if (train->parsed()) return run_train(t);
    if (compare->parsed()) return run_compare(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 1;
}
