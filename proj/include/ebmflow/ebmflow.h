/* Copyright 2026 The ebmflow Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to ebmflow: EBM-Flow models (invertible flows over a
 * Gaussian-smoothed Boltzmann machine base) trained by maximum likelihood.
 *
 * Every call returns an ebmf_status. On failure the calling thread's
 * ebmf_last_error() holds a message until its next failing call. Handles are
 * opaque and owned by the caller, who releases them with the matching _free.
 */

#ifndef EBMFLOW_EBMFLOW_H_
#define EBMFLOW_EBMFLOW_H_

#include <stddef.h>
#include <stdint.h>

#if defined(EBMF_BUILDING_LIBRARY)
#define EBMF_API __attribute__((visibility("default")))
#else
#define EBMF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  EBMF_OK = 0,
  EBMF_ERR_CONFIG = 1,     /* invalid configuration or unsupported request */
  EBMF_ERR_ARGUMENT = 2,   /* bad argument (null handle, wrong shape) */
  EBMF_ERR_IO = 3,         /* file could not be read or written */
  EBMF_ERR_FORMAT = 4,     /* corrupt or incompatible file contents */
  EBMF_ERR_PD_FAILURE = 5, /* J + delta*I lost positive definiteness */
  EBMF_ERR_NUMERIC = 6,    /* NaN/Inf in a computation */
  EBMF_ERR_RUNTIME = 7     /* anything else */
} ebmf_status;

typedef enum { EBMF_LOGZ_EXACT = 0, EBMF_LOGZ_AIS = 1 } ebmf_logz_mode;

typedef struct ebmf_config ebmf_config;
typedef struct ebmf_model ebmf_model;
typedef struct ebmf_tensor ebmf_tensor;

EBMF_API const char* ebmf_version(void);
EBMF_API const char* ebmf_last_error(void);
EBMF_API void ebmf_string_free(char* s);

/* ---- tensors: dense row-major doubles, rank 0..16 ---- */

EBMF_API ebmf_status ebmf_tensor_create(size_t rank, const uint64_t* dims, ebmf_tensor** out);
EBMF_API void ebmf_tensor_free(ebmf_tensor* t);
EBMF_API size_t ebmf_tensor_rank(const ebmf_tensor* t);
EBMF_API uint64_t ebmf_tensor_dim(const ebmf_tensor* t, size_t axis);
EBMF_API size_t ebmf_tensor_size(const ebmf_tensor* t);
EBMF_API double* ebmf_tensor_data(ebmf_tensor* t);
/* Tensor file: "EBMF", u32 version, u32 rank, u64 dims, f64 payload, CRC32. */
EBMF_API ebmf_status ebmf_tensor_read(const char* path, ebmf_tensor** out);
EBMF_API ebmf_status ebmf_tensor_write(const ebmf_tensor* t, const char* path);
/* Rank-2 tensors only; header NULL gives x0,x1,... */
EBMF_API ebmf_status ebmf_tensor_write_csv(const ebmf_tensor* t, const char* header, const char* path);

/* ---- run configuration (INI sections data / architecture / training) ---- */

EBMF_API ebmf_status ebmf_config_load(const char* path, ebmf_config** out);
EBMF_API ebmf_status ebmf_config_parse(const char* text, ebmf_config** out);
/* key is "section.name", e.g. "training.epochs". */
EBMF_API ebmf_status ebmf_config_set(ebmf_config* cfg, const char* key, const char* value);
EBMF_API ebmf_status ebmf_config_to_ini(const ebmf_config* cfg, char** out);
EBMF_API void ebmf_config_free(ebmf_config* cfg);

typedef struct {
  size_t epochs_run;
  size_t final_epoch;
  int has_metrics;
  double nll_nats;
  double bpd;
  double logz;
  double logz_stderr;
  size_t pd_failures;
  double seconds;
} ebmf_train_summary;

typedef void (*ebmf_log_fn)(const char* line, void* user);

/* Trains into training.output_dir (metrics.csv, checkpoint.ebmf). With
 * resume != 0 continues from the checkpoint found there. log may be NULL. */
EBMF_API ebmf_status ebmf_train(const ebmf_config* cfg, int resume, ebmf_log_fn log, void* user,
                                ebmf_train_summary* out);

/* ---- trained models ---- */

typedef struct {
  size_t dim;
  int image;
  size_t height, width, channels;
  size_t epoch;
  int has_spins;      /* rbm and dflow bases */
  char base_kind[16]; /* rbm | dflow | multicov | gaussian */
  double delta;
} ebmf_model_info;

EBMF_API ebmf_status ebmf_model_load(const char* checkpoint, ebmf_model** out);
EBMF_API void ebmf_model_free(ebmf_model* m);
EBMF_API ebmf_status ebmf_model_info_get(const ebmf_model* m, ebmf_model_info* out);

/* Ancestral samples: x (count x D, pixels in 0..255 for image models) and the
 * conditioning spins s (count x D). Either output may be NULL. */
EBMF_API ebmf_status ebmf_model_sample(ebmf_model* m, size_t count, uint64_t seed, ebmf_tensor** x,
                                       ebmf_tensor** s);
/* Distinct spin vectors among `count` base draws, in order of first appearance. */
EBMF_API ebmf_status ebmf_model_distinct_spins(ebmf_model* m, size_t count, uint64_t seed,
                                               ebmf_tensor** out);
/* per_column samples for each row of spins (k x D); row c*per_column + i of
 * the result belongs to spin row c. */
EBMF_API ebmf_status ebmf_model_conditional_grid(ebmf_model* m, const ebmf_tensor* spins,
                                                 size_t per_column, uint64_t seed, ebmf_tensor** out);

typedef struct {
  double nll_nats;
  double bpd;
  double logz;
  double logz_stderr;
  size_t count;
} ebmf_eval_result;

typedef struct {
  ebmf_logz_mode mode;
  size_t ais_temps;  /* 0 selects 1000 */
  size_t ais_chains; /* 0 selects 256 */
  uint64_t ais_seed;
} ebmf_logz_options;

/* dataset: moons | rings | gauss8 | checker | binimg:<path>. count 0 means
 * every image of a binimg file, or 1000 toy points. */
EBMF_API ebmf_status ebmf_model_eval(ebmf_model* m, const char* dataset, size_t count, uint64_t seed,
                                     const ebmf_logz_options* opts, ebmf_eval_result* out);
/* Per-row log density of continuous inputs (N x D) -> N x 1. */
EBMF_API ebmf_status ebmf_model_log_likelihood(ebmf_model* m, const ebmf_tensor* x,
                                               const ebmf_logz_options* opts, ebmf_tensor** out,
                                               double* logz, double* logz_stderr);

/* ---- figures ---- */

/* kind: "curve" (metrics CSV -> SVG), "scatter" (2-column CSV or tensor file
 * -> SVG), "grid" (N x H x W x C tensor file -> PPM; per_column 0 picks a
 * square layout). */
EBMF_API ebmf_status ebmf_plot(const char* input, const char* kind, size_t per_column,
                               const char* out);
/* Conditional grid figure: SVG with one panel per spin vector for 2-D
 * models, PPM with one column per spin vector for image models. */
EBMF_API ebmf_status ebmf_write_grid_figure(const ebmf_model* m, const ebmf_tensor* grid,
                                            const ebmf_tensor* spins, size_t per_column,
                                            const char* path);

#ifdef __cplusplus
}
#endif

#endif /* EBMFLOW_EBMFLOW_H_ */
