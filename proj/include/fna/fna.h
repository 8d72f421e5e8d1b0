// Copyright 2026 The fna Authors. All Rights Reserved.
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

#ifndef FNA_FNA_H_
#define FNA_FNA_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FNA_API __declspec(dllexport)
#else
#define FNA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fna_status {
  FNA_OK = 0,
  FNA_ERR_DIMENSION = 1,
  FNA_ERR_CONFIG = 2,
  FNA_ERR_NUMERICAL = 3,
  FNA_ERR_PARSE = 4,
  FNA_ERR_IO = 5,
  FNA_ERR_CHECKSUM = 6,
  FNA_ERR_VERSION = 7,
  FNA_ERR_VALIDATION = 8,
  FNA_ERR_USAGE = 9,
  FNA_ERR_INTERNAL = 100
} fna_status;

typedef struct fna_model fna_model;
typedef struct fna_spectrogram fna_spectrogram;

/* Library version string, static storage. */
FNA_API const char* fna_version(void);

/* Message of the last failed call on the calling thread; "" if none. Valid
 * until the next failing call on the same thread. */
FNA_API const char* fna_last_error(void);
FNA_API const char* fna_status_name(fna_status status);

/* Frees strings returned through `char**` out-parameters. */
FNA_API void fna_string_free(char* s);

FNA_API fna_status fna_set_num_threads(int n);
FNA_API int fna_get_num_threads(void);

/* JSON run configuration for a preset ("desk", "tiny", "full"). */
FNA_API fna_status fna_default_config(const char* preset, char** out_json);

/* Writes the synthetic tone dataset under `root`. */
FNA_API fna_status fna_generate_synthetic(const char* root, int num_classes, int clips_per_class,
                                          uint64_t seed, char** out_json);

/* Validates an ESC-50 style dataset and writes <root>/manifest.json.
 * `meta_csv` may be NULL for <root>/meta/esc50.csv. */
FNA_API fna_status fna_ingest(const char* root, const char* meta_csv, int max_classes,
                              char** out_json);

/* Commands driven by a JSON run configuration (see fna_default_config).
 * `out_json`, when non-NULL, receives the command summary. */
FNA_API fna_status fna_train(const char* config_json, char** out_json);
FNA_API fna_status fna_evaluate(const char* config_json, char** out_json);
FNA_API fna_status fna_sweep(const char* config_json, char** out_json);
FNA_API fna_status fna_interpret(const char* config_json, char** out_json);

FNA_API fna_status fna_model_load(const char* checkpoint_path, fna_model** out);
FNA_API void fna_model_free(fna_model* model);
FNA_API fna_status fna_model_info(const fna_model* model, char** out_json);
/* Class probabilities for a WAV file. `probs` holds `capacity` doubles;
 * `num_classes` receives the class count even when capacity is too small. */
FNA_API fna_status fna_model_classify_wav(const fna_model* model, const char* wav_path,
                                          double* probs, size_t capacity, size_t* num_classes);

/* Log-magnitude STFT of a WAV file after resampling to `sample_rate`
 * (0 keeps 16 kHz). */
FNA_API fna_status fna_spectrogram_from_wav(const char* wav_path, int sample_rate,
                                            fna_spectrogram** out);
FNA_API void fna_spectrogram_free(fna_spectrogram* s);
FNA_API fna_status fna_spectrogram_shape(const fna_spectrogram* s, size_t* rows, size_t* cols);
/* Row-major [rows, cols] copy into `out`, which holds `capacity` floats. */
FNA_API fna_status fna_spectrogram_log_mag(const fna_spectrogram* s, float* out, size_t capacity);
/* ".pgm" writes an image, anything else the raw FNASPEC1 container. */
FNA_API fna_status fna_spectrogram_save(const fna_spectrogram* s, const char* path);

#ifdef __cplusplus
}
#endif

#endif  // FNA_FNA_H_
