// Copyright 2026 The gradleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


/* C interface to the gradleak library. Objects are opaque handles; every
 * call that can fail returns a gl_status and leaves a message readable via
 * gl_last_error() on the calling thread. */
#ifndef GRADLEAK_GRADLEAK_H_
#define GRADLEAK_GRADLEAK_H_

#include <stddef.h>
#include <stdint.h>

#if defined(GL_BUILDING_LIBRARY)
#define GL_API __attribute__((visibility("default")))
#else
#define GL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gl_status {
  GL_OK = 0,
  GL_ERR_SHAPE = 1,
  GL_ERR_DOMAIN = 2,
  GL_ERR_CONTRACT = 3,
  GL_ERR_UNSUPPORTED_HIGHER_ORDER = 4,
  GL_ERR_CONFIG = 5,
  GL_ERR_DATA = 6,
  GL_ERR_FORMAT = 7,
  GL_ERR_PROTOCOL = 8,
  GL_ERR_ORACLE_FAILURE = 9,
  GL_ERR_ATTACK_DIVERGED = 10,
  GL_ERR_CRAFTING_DIVERGED = 11,
  GL_ERR_IO = 12,
  GL_ERR_INVALID_ARGUMENT = 100, /* null pointer, short buffer */
  GL_ERR_INTERNAL = 101
} gl_status;

typedef struct gl_config gl_config;
typedef struct gl_model gl_model;

typedef enum gl_experiment_kind {
  GL_KIND_ATTACK_EVAL = 0,
  GL_KIND_FEDERATE = 1,
  GL_KIND_GRADCHECK = 2,
  GL_KIND_CRAFT = 3
} gl_experiment_kind;

typedef struct gl_run_summary {
  gl_experiment_kind kind;
  size_t items;
  size_t failures; /* nonzero means some check or item failed */
  double mean_psnr_db;
  double mean_ssim;
  double mean_psnr_sensitive_db; /* NaN when absent */
  double mean_ssim_sensitive;
  double final_accuracy; /* federate only, NaN otherwise */
  char config_hash[17];
} gl_run_summary;

GL_API const char* gl_version(void);
GL_API const char* gl_status_name(gl_status status);
/* Message of the last failing call on this thread; "" after success. */
GL_API const char* gl_last_error(void);

GL_API gl_status gl_config_new(gl_config** out);
GL_API gl_status gl_config_load(const char* path, gl_config** out);
GL_API gl_status gl_config_parse(const char* text, gl_config** out);
GL_API gl_status gl_config_set(gl_config* config, const char* key, const char* value);
/* String getters copy into buf (NUL-terminated) when cap suffices and always
 * report the required size, terminator included, through *needed. */
GL_API gl_status gl_config_get(const gl_config* config, const char* key, char* buf, size_t cap,
                               size_t* needed);
GL_API gl_status gl_config_resolved(const gl_config* config, char* buf, size_t cap,
                                    size_t* needed);
GL_API gl_status gl_config_hash(const gl_config* config, char out[17]);
GL_API void gl_config_free(gl_config* config);

/* Runs the configured experiment, writing its files. */
GL_API gl_status gl_run(const gl_config* config, gl_run_summary* out);

GL_API gl_status gl_model_build(const char* arch, size_t height, size_t width, size_t channels,
                                size_t classes, uint64_t seed, gl_model** out);
GL_API gl_status gl_model_save(const gl_model* model, const char* path);
GL_API gl_status gl_model_load(gl_model* model, const char* path);
GL_API gl_status gl_model_num_params(const gl_model* model, size_t* out);
GL_API gl_status gl_model_classes(const gl_model* model, size_t* out);
/* x holds n images of the model's input size; out receives n*classes. */
GL_API gl_status gl_model_logits(const gl_model* model, const double* x, size_t n, double* out);
GL_API void gl_model_free(gl_model* model);

GL_API gl_status gl_psnr(const double* reference, const double* candidate, size_t n, double* out);
GL_API gl_status gl_ssim(const double* reference, const double* candidate, size_t height,
                         size_t width, size_t channels, double* out);

#ifdef __cplusplus
}
#endif

#endif /* GRADLEAK_GRADLEAK_H_ */
