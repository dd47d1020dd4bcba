/* SPDX-License-Identifier: Apache-2.0 */
#ifndef RBLOCK_RBLOCK_H
#define RBLOCK_RBLOCK_H

#include <stddef.h>
#include <stdint.h>

#if defined(RBLOCK_BUILDING_LIBRARY)
#define RBLOCK_API __attribute__((visibility("default")))
#else
#define RBLOCK_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum rb_status {
  RB_OK = 0,
  RB_ERR_USAGE = 1,     /* bad argument, unknown method, missing file */
  RB_ERR_DATA = 2,      /* malformed config, dataset or checkpoint */
  RB_ERR_NUMERICAL = 3, /* formula precondition, divergence */
  RB_ERR_INTERNAL = 4
} rb_status;

RBLOCK_API const char* rb_version(void);
/* Message of the last failing call on this thread; "" if none. */
RBLOCK_API const char* rb_last_error(void);

/* Owned UTF-8 text (JSON results). */
typedef struct rb_text rb_text;
RBLOCK_API const char* rb_text_data(const rb_text* text);
RBLOCK_API size_t rb_text_size(const rb_text* text);
RBLOCK_API void rb_text_free(rb_text* text);

/* ---- gamma / p relationship ---- */
RBLOCK_API rb_status rb_gamma_simple(double p, uint32_t b_size, double* gamma);
RBLOCK_API rb_status rb_gamma_corrected(double p, uint32_t b_size, uint32_t m, uint32_t n, double* gamma);
/* Requires m, n > 2 * b_size. */
RBLOCK_API rb_status rb_gamma_exact(double p, uint32_t b_size, uint32_t m, uint32_t n, double tol, double* gamma);
RBLOCK_API rb_status rb_p_exact(double gamma, uint32_t b_size, uint32_t m, uint32_t n, double* p);
RBLOCK_API rb_status rb_p_no_margin(double gamma, uint32_t b_size, double* p);
RBLOCK_API rb_status rb_p_valid_region(double gamma, uint32_t b_size, uint32_t m, uint32_t n, double* p);
/* mode: "simple" | "corrected" | "exact". m = n = 0 means unspecified. */
RBLOCK_API rb_status rb_gamma_report(double p, uint32_t b_size, uint32_t m, uint32_t n, const char* mode,
                                     double tol, rb_text** json);

/* ---- masks ---- */
typedef struct rb_mask rb_mask;

/* method: none, dropout, spatial_dropout, dropblock, rdrop, cdrop, rspatial,
 * rdropblock, bdropdml, sdropdml. gamma_mode NULL selects "corrected". */
RBLOCK_API rb_status rb_mask_sample(const char* method, uint32_t m, uint32_t n, uint32_t c, double p,
                                    uint32_t b_size, const char* gamma_mode, uint64_t seed, rb_mask** out);
RBLOCK_API void rb_mask_free(rb_mask* mask);
RBLOCK_API int rb_mask_is_pair(const rb_mask* mask);
/* Entries per keep-mask, m * n * c. */
RBLOCK_API size_t rb_mask_size(const rb_mask* mask);
/* which = 1 or 2; values in [m][n][c] order. NULL for keep2 of a single mask. */
RBLOCK_API const double* rb_mask_keep(const rb_mask* mask, int which);
RBLOCK_API double rb_mask_scale(const rb_mask* mask, int which);
RBLOCK_API rb_status rb_mask_json(const rb_mask* mask, rb_text** json);

/* ---- Monte Carlo verification ---- */
typedef struct rb_verify_options {
  const char* method; /* NULL: one drop pattern at `gamma` */
  double gamma;
  double p;
  uint32_t m;
  uint32_t n;
  uint32_t c;
  uint32_t b_size;
  uint64_t trials;
  uint64_t seed;
  const char* gamma_mode;    /* NULL = "corrected" */
  const char* center_region; /* NULL = "full" */
  uint32_t threads;          /* 0 = hardware concurrency */
} rb_verify_options;

RBLOCK_API void rb_verify_options_init(rb_verify_options* opts);
/* pass: 1 within 3 sigma, 0 outside, -1 no analytic reference. */
RBLOCK_API rb_status rb_verify(const rb_verify_options* opts, int* pass, rb_text** report);

/* ---- training ---- */
/* seed may be NULL to keep the config's seed. summary receives JSON. */
RBLOCK_API rb_status rb_train(const char* config_path, const char* out_dir, const uint64_t* seed,
                              rb_text** summary);
/* methods: comma list of name or name:p; NULL or "" runs the six pair strategies. */
RBLOCK_API rb_status rb_compare(const char* config_path, const char* methods, const char* out_dir,
                                const uint64_t* seed, rb_text** summary);

#ifdef __cplusplus
}
#endif

#endif /* RBLOCK_RBLOCK_H */
