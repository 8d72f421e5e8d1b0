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

#include "fna/fna.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "fna/audio.h"
#include "fna/checkpoint.h"
#include "fna/dataset.h"
#include "fna/error.h"
#include "fna/metrics.h"
#include "fna/parallel.h"
#include "fna/serialize.h"
#include "fna/workflow.h"

struct fna_model {
  fna::Checkpoint checkpoint;
};

struct fna_spectrogram {
  fna::Spectrogram value;
};

namespace {

thread_local std::string g_last_error;

fna_status fail(fna_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
fna_status guarded(F&& f) {
  try {
    f();
    return FNA_OK;
  } catch (const fna::Error& e) {
    return fail(static_cast<fna_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(FNA_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(FNA_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(FNA_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(FNA_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out_json, const std::string& s) {
  if (out_json) *out_json = dup_string(s);
}

void require(const void* p, const char* what) {
  if (!p) throw fna::UsageError(std::string(what) + " is NULL");
}

template <class Run>
fna_status run_command(const char* config_json, char** out_json, Run run) {
  if (out_json) *out_json = nullptr;
  return guarded([&] {
    require(config_json, "config_json");
    emit(out_json, run(fna::RunConfig::from_json(config_json)));
  });
}

}  // namespace

extern "C" {

const char* fna_version(void) { return fna::kCodeVersion; }

const char* fna_last_error(void) { return g_last_error.c_str(); }

const char* fna_status_name(fna_status status) {
  switch (status) {
    case FNA_OK: return "ok";
    case FNA_ERR_INTERNAL: return "internal";
    default: return fna::error_code_name(static_cast<fna::ErrorCode>(status));
  }
}

void fna_string_free(char* s) { std::free(s); }

fna_status fna_set_num_threads(int n) {
  return guarded([&] {
    if (n < 1) throw fna::UsageError("thread count must be >= 1");
    fna::set_num_threads(n);
  });
}

int fna_get_num_threads(void) { return fna::num_threads(); }

fna_status fna_default_config(const char* preset, char** out_json) {
  if (out_json) *out_json = nullptr;
  return guarded([&] {
    require(out_json, "out_json");
    emit(out_json, fna::RunConfig::from_preset(preset ? preset : "desk").to_json());
  });
}

fna_status fna_generate_synthetic(const char* root, int num_classes, int clips_per_class,
                                  uint64_t seed, char** out_json) {
  if (out_json) *out_json = nullptr;
  return guarded([&] {
    require(root, "root");
    fna::SynthConfig sc;
    sc.num_classes = num_classes;
    sc.clips_per_class = clips_per_class;
    sc.seed = seed;
    emit(out_json, fna::gen_synth_run(root, sc));
  });
}

fna_status fna_ingest(const char* root, const char* meta_csv, int max_classes, char** out_json) {
  if (out_json) *out_json = nullptr;
  return guarded([&] {
    require(root, "root");
    const auto m = fna::ingest_run(root, meta_csv ? meta_csv : "", max_classes);
    emit(out_json, m.to_json());
  });
}

fna_status fna_train(const char* config_json, char** out_json) {
  return run_command(config_json, out_json, fna::train_run);
}
fna_status fna_evaluate(const char* config_json, char** out_json) {
  return run_command(config_json, out_json, fna::evaluate_run);
}
fna_status fna_sweep(const char* config_json, char** out_json) {
  return run_command(config_json, out_json, fna::sweep_run);
}
fna_status fna_interpret(const char* config_json, char** out_json) {
  return run_command(config_json, out_json, fna::interpret_run);
}

fna_status fna_model_load(const char* checkpoint_path, fna_model** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    auto m = std::make_unique<fna_model>();
    m->checkpoint = fna::load_checkpoint(checkpoint_path);
    *out = m.release();
  });
}

void fna_model_free(fna_model* model) { delete model; }

fna_status fna_model_info(const fna_model* model, char** out_json) {
  if (out_json) *out_json = nullptr;
  return guarded([&] {
    require(model, "model");
    require(out_json, "out_json");
    const auto& c = model->checkpoint;
    fna::Json j;
    j["model"] = fna::to_json(c.model_config);
    j["train"] = fna::to_json(c.train_config);
    j["preprocess"] = fna::to_json(c.preprocess);
    j["epoch"] = c.epoch;
    j["step"] = c.step;
    j["best_epoch"] = c.best_epoch;
    j["best_val_accuracy"] = c.best_val_accuracy;
    j["parameters"] = c.model->parameter_count();
    j["model_id"] = fna::model_id(*c.model);
    emit(out_json, j.dump(2));
  });
}

fna_status fna_model_classify_wav(const fna_model* model, const char* wav_path, double* probs,
                                  size_t capacity, size_t* num_classes) {
  return guarded([&] {
    require(model, "model");
    require(wav_path, "wav_path");
    const auto& c = model->checkpoint;
    const auto spec = fna::preprocess(fna::load_wav(wav_path), c.preprocess);
    fna::FocalNetClassifier cls(*c.model, c.preprocess.input_size, c.preprocess.channels);
    const auto p = cls.classify(spec.log_mag, nullptr);
    if (num_classes) *num_classes = p.size();
    if (capacity < p.size())
      throw fna::UsageError("probability buffer holds " + std::to_string(capacity) + ", need " +
                            std::to_string(p.size()));
    require(probs, "probs");
    std::copy(p.begin(), p.end(), probs);
  });
}

fna_status fna_spectrogram_from_wav(const char* wav_path, int sample_rate, fna_spectrogram** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    require(wav_path, "wav_path");
    require(out, "out");
    fna::PreprocessConfig pc;
    if (sample_rate > 0) {
      pc.sample_rate = sample_rate;
      pc.stft.sample_rate = sample_rate;
    }
    auto s = std::make_unique<fna_spectrogram>();
    s->value = fna::preprocess(fna::load_wav(wav_path), pc);
    *out = s.release();
  });
}

void fna_spectrogram_free(fna_spectrogram* s) { delete s; }

fna_status fna_spectrogram_shape(const fna_spectrogram* s, size_t* rows, size_t* cols) {
  return guarded([&] {
    require(s, "spectrogram");
    if (rows) *rows = s->value.log_mag.rows;
    if (cols) *cols = s->value.log_mag.cols;
  });
}

fna_status fna_spectrogram_log_mag(const fna_spectrogram* s, float* out, size_t capacity) {
  return guarded([&] {
    require(s, "spectrogram");
    const auto& d = s->value.log_mag.data;
    if (capacity < d.size())
      throw fna::UsageError("buffer holds " + std::to_string(capacity) + " floats, need " +
                            std::to_string(d.size()));
    require(out, "out");
    std::copy(d.begin(), d.end(), out);
  });
}

fna_status fna_spectrogram_save(const fna_spectrogram* s, const char* path) {
  return guarded([&] {
    require(s, "spectrogram");
    require(path, "path");
    const std::filesystem::path p(path);
    if (p.extension() == ".pgm")
      fna::write_pgm(s->value.log_mag, p);
    else
      fna::write_spectrogram(s->value, p);
  });
}

}  // extern "C"
