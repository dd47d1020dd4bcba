// SPDX-License-Identifier: Apache-2.0
#include "rblock/rblock.h"

#include <algorithm>
#include <exception>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rblock/error.hpp"
#include "rblock/gamma.hpp"
#include "rblock/masks.hpp"
#include "rblock/runner.hpp"

struct rb_text {
  std::string value;
};

struct rb_mask {
  nlohmann::json exported;
  std::vector<double> keep1;
  std::vector<double> keep2;
  double scale1 = 1.0;
  double scale2 = 1.0;
  bool pair = false;
};

namespace {

thread_local std::string g_last_error;

rb_status fail(rb_status status, const std::string& msg) {
  g_last_error = msg;
  return status;
}

template <typename F>
rb_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return RB_OK;
  } catch (const rblock::Error& e) {
    return fail(static_cast<rb_status>(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(RB_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(RB_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(RB_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* ptr, const char* name) {
  if (!ptr) throw rblock::InvalidArgument(std::string(name) + " must not be NULL");
}

rb_text* make_text(std::string s) { return new rb_text{std::move(s)}; }

std::vector<double> to_vector(const nlohmann::json& arr) {
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) out.push_back(v.get<double>());
  return out;
}

}  // namespace

extern "C" {

const char* rb_version(void) { return "0.1.0"; }
const char* rb_last_error(void) { return g_last_error.c_str(); }

const char* rb_text_data(const rb_text* text) { return text ? text->value.c_str() : ""; }
size_t rb_text_size(const rb_text* text) { return text ? text->value.size() : 0; }
void rb_text_free(rb_text* text) { delete text; }

rb_status rb_gamma_simple(double p, uint32_t b_size, double* gamma) {
  return guarded([&] {
    require(gamma, "gamma");
    rblock::BlockGeometry{1, 1, b_size}.validate();
    *gamma = rblock::gamma_simple(p, b_size);
  });
}

rb_status rb_gamma_corrected(double p, uint32_t b_size, uint32_t m, uint32_t n, double* gamma) {
  return guarded([&] {
    require(gamma, "gamma");
    *gamma = rblock::gamma_corrected(p, {m, n, b_size});
  });
}

rb_status rb_gamma_exact(double p, uint32_t b_size, uint32_t m, uint32_t n, double tol, double* gamma) {
  return guarded([&] {
    require(gamma, "gamma");
    *gamma = rblock::solve_gamma_exact(p, {m, n, b_size}, tol);
  });
}

rb_status rb_p_exact(double gamma, uint32_t b_size, uint32_t m, uint32_t n, double* p) {
  return guarded([&] {
    require(p, "p");
    *p = rblock::p_exact(gamma, {m, n, b_size});
  });
}

rb_status rb_p_no_margin(double gamma, uint32_t b_size, double* p) {
  return guarded([&] {
    require(p, "p");
    *p = rblock::p_no_margin(gamma, b_size);
  });
}

rb_status rb_p_valid_region(double gamma, uint32_t b_size, uint32_t m, uint32_t n, double* p) {
  return guarded([&] {
    require(p, "p");
    *p = rblock::p_valid_region(gamma, {m, n, b_size});
  });
}

rb_status rb_gamma_report(double p, uint32_t b_size, uint32_t m, uint32_t n, const char* mode, double tol,
                          rb_text** json) {
  return guarded([&] {
    require(json, "json");
    require(mode, "mode");
    rblock::GammaRequest req;
    req.p = p;
    req.b_size = b_size;
    if (m != 0) req.m = m;
    if (n != 0) req.n = n;
    req.mode = rblock::parse_gamma_mode(mode);
    req.tol = tol;
    *json = make_text(rblock::gamma_report(req).dump());
  });
}

rb_status rb_mask_sample(const char* method, uint32_t m, uint32_t n, uint32_t c, double p, uint32_t b_size,
                         const char* gamma_mode, uint64_t seed, rb_mask** out) {
  return guarded([&] {
    require(method, "method");
    require(out, "out");
    const auto mode = gamma_mode ? rblock::parse_gamma_mode(gamma_mode) : rblock::GammaMode::Corrected;
    auto mask = std::make_unique<rb_mask>();
    mask->exported = rblock::mask_export(rblock::parse_drop_method(method), {m, n, c}, p, b_size, mode, seed);
    mask->keep1 = to_vector(mask->exported["keep1"]);
    mask->scale1 = mask->exported["scale1"].get<double>();
    mask->pair = !mask->exported["keep2"].is_null();
    if (mask->pair) {
      mask->keep2 = to_vector(mask->exported["keep2"]);
      mask->scale2 = mask->exported["scale2"].get<double>();
    }
    *out = mask.release();
  });
}

void rb_mask_free(rb_mask* mask) { delete mask; }
int rb_mask_is_pair(const rb_mask* mask) { return mask && mask->pair ? 1 : 0; }
size_t rb_mask_size(const rb_mask* mask) { return mask ? mask->keep1.size() : 0; }

const double* rb_mask_keep(const rb_mask* mask, int which) {
  if (!mask) return nullptr;
  if (which == 1) return mask->keep1.data();
  if (which == 2 && mask->pair) return mask->keep2.data();
  return nullptr;
}

double rb_mask_scale(const rb_mask* mask, int which) {
  if (!mask) return 0.0;
  return which == 2 ? mask->scale2 : mask->scale1;
}

rb_status rb_mask_json(const rb_mask* mask, rb_text** json) {
  return guarded([&] {
    require(mask, "mask");
    require(json, "json");
    *json = make_text(mask->exported.dump());
  });
}

void rb_verify_options_init(rb_verify_options* opts) {
  if (!opts) return;
  *opts = rb_verify_options{};
  opts->p = 0.2;
  opts->m = 12;
  opts->n = 12;
  opts->c = 1;
  opts->b_size = 3;
  opts->trials = 100000;
}

rb_status rb_verify(const rb_verify_options* opts, int* pass, rb_text** report) {
  return guarded([&] {
    require(opts, "opts");
    require(pass, "pass");
    require(report, "report");
    rblock::VerifyRequest req;
    if (opts->method) req.method = rblock::parse_drop_method(opts->method);
    req.gamma = opts->gamma;
    req.p = opts->p;
    req.m = opts->m;
    req.n = opts->n;
    req.c = opts->c;
    req.b_size = opts->b_size;
    req.trials = opts->trials;
    req.seed = opts->seed;
    if (opts->gamma_mode) req.gamma_mode = rblock::parse_gamma_mode(opts->gamma_mode);
    if (opts->center_region) req.center_region = rblock::parse_center_region(opts->center_region);
    req.threads = opts->threads ? opts->threads : std::max(1u, std::thread::hardware_concurrency());
    const auto out = rblock::verify_report(req);
    *pass = out["pass"].is_null() ? -1 : (out["pass"].get<bool>() ? 1 : 0);
    *report = make_text(out.dump());
  });
}

rb_status rb_train(const char* config_path, const char* out_dir, const uint64_t* seed, rb_text** summary) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out_dir, "out_dir");
    require(summary, "summary");
    const auto s = seed ? std::optional<std::uint64_t>(*seed) : std::nullopt;
    *summary = make_text(rblock::train_command(config_path, out_dir, s).dump());
  });
}

rb_status rb_compare(const char* config_path, const char* methods, const char* out_dir, const uint64_t* seed,
                     rb_text** summary) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out_dir, "out_dir");
    require(summary, "summary");
    const auto s = seed ? std::optional<std::uint64_t>(*seed) : std::nullopt;
    *summary = make_text(rblock::compare_command(config_path, methods ? methods : "", out_dir, s).dump());
  });
}

}  // extern "C"
