// Copyright 2026 The OmniSeg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the OmniSeg referring-segmentation library.
 *
 * Every call returns an omniseg_status. On failure a message is available
 * from omniseg_last_error() on the calling thread until the next call.
 * Strings and buffers handed out through out-parameters are owned by the
 * caller and released with omniseg_string_free / omniseg_buffer_free. */

#ifndef OMNISEG_OMNISEG_H_
#define OMNISEG_OMNISEG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OMNISEG_API __declspec(dllexport)
#else
#define OMNISEG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum omniseg_status {
  OMNISEG_OK = 0,
  OMNISEG_ERR_INVALID_ARGUMENT = 1,
  OMNISEG_ERR_DIMENSION = 2,
  OMNISEG_ERR_CONFIG = 3,
  OMNISEG_ERR_FORMAT = 4,
  OMNISEG_ERR_NOT_FOUND = 5,
  OMNISEG_ERR_IO = 6,
  OMNISEG_ERR_NUMERIC = 7,
  OMNISEG_ERR_EMPTY_REGION = 8,
  OMNISEG_ERR_UNAVAILABLE = 9,
  OMNISEG_ERR_USAGE = 10,
  OMNISEG_ERR_INTERNAL = 99
} omniseg_status;

typedef struct omniseg_model omniseg_model;
typedef struct omniseg_service omniseg_service;
typedef struct omniseg_server omniseg_server;

OMNISEG_API const char* omniseg_version(void);
OMNISEG_API const char* omniseg_status_name(omniseg_status status);
OMNISEG_API const char* omniseg_last_error(void);
OMNISEG_API void omniseg_string_free(char* s);
OMNISEG_API void omniseg_buffer_free(uint8_t* data);

/* Dataset. `config_json` may be NULL for the defaults; its "seed" is
 * replaced by `seed`. */
OMNISEG_API omniseg_status omniseg_build_dataset(uint64_t seed, const char* config_json,
                                                 const char* out_dir, char** summary_json);
/* OMNISEG_OK with {"ok": false, ...} in the report when invariants fail. */
OMNISEG_API omniseg_status omniseg_validate_dataset(const char* root, char** report_json);

/* Models. `overrides_json` (nullable) patches fields of the preset. */
OMNISEG_API omniseg_status omniseg_model_create(const char* preset, const char* overrides_json,
                                                uint64_t seed, omniseg_model** out);
OMNISEG_API omniseg_status omniseg_model_load(const char* path, omniseg_model** out);
OMNISEG_API omniseg_status omniseg_model_save(const omniseg_model* model, const char* path);
OMNISEG_API omniseg_status omniseg_model_describe(const omniseg_model* model, char** info_json);
OMNISEG_API omniseg_status omniseg_model_hash(const omniseg_model* model, const char* prefix,
                                              uint64_t* hash);
OMNISEG_API void omniseg_model_free(omniseg_model* model);

typedef struct omniseg_train_options {
  const char* data_root;
  const char* config_text;       /* key=value lines; NULL for defaults */
  const char* out_dir;
  const char* resume_checkpoint; /* NULL to start from a fresh model */
  int first_stage;               /* 1..3; 0 infers it from stage<N>.ckpt */
  int override_seed;             /* nonzero: use `seed` instead of the config's */
  uint64_t seed;
  const char* preset;            /* NULL keeps the config's preset */
} omniseg_train_options;

OMNISEG_API omniseg_status omniseg_train(const omniseg_train_options* options,
                                         char** summary_json);

/* Writes report.json and records.jsonl under `out_dir` when it is non-NULL.
 * `prompt_kind` (nullable) is "mask", "box" or "scribble"; `limit` <= 0
 * evaluates the whole split. */
OMNISEG_API omniseg_status omniseg_evaluate(const omniseg_model* model, const char* data_root,
                                            const char* split, const char* prompt_kind,
                                            int limit, const char* out_dir, char** report_json);

/* Finite-difference suite over every differentiable op and the full model. */
OMNISEG_API omniseg_status omniseg_gradcheck(uint64_t seed, char** report_json);

/* Service over a copy of `model` and the dataset under `data_root`. */
OMNISEG_API omniseg_status omniseg_service_create(const omniseg_model* model,
                                                  const char* data_root,
                                                  omniseg_service** out);
OMNISEG_API void omniseg_service_free(omniseg_service* service);
OMNISEG_API omniseg_status omniseg_service_segment(const omniseg_service* service,
                                                   const char* request_json,
                                                   char** response_json);
OMNISEG_API omniseg_status omniseg_service_samples(const omniseg_service* service,
                                                   const char* split, int page,
                                                   char** page_json);
OMNISEG_API omniseg_status omniseg_service_image(const omniseg_service* service,
                                                 const char* id, uint8_t** png,
                                                 size_t* size);

/* HTTP front end on a background thread; `port` 0 picks a free port. The
 * service must outlive the server. omniseg_server_stop only requests
 * shutdown; omniseg_server_wait blocks until the listener exits. */
OMNISEG_API omniseg_status omniseg_server_start(const omniseg_service* service,
                                                const char* host, int port,
                                                omniseg_server** out, int* bound_port);
OMNISEG_API omniseg_status omniseg_server_wait(omniseg_server* server);
OMNISEG_API omniseg_status omniseg_server_stop(omniseg_server* server);
OMNISEG_API void omniseg_server_free(omniseg_server* server);

#ifdef __cplusplus
}
#endif

#endif /* OMNISEG_OMNISEG_H_ */
