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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fna/audio.h"
#include "fna/dataset.h"
#include "fna/focalnet.h"
#include "fna/interpret.h"
#include "fna/metrics.h"
#include "fna/training.h"

namespace fna {

// Everything a command needs; serialized into stamp.json so that any run can
// be repeated with `--config <run>/stamp.json`.
struct RunConfig {
  std::string preset = "desk";
  FocalNetConfig model = FocalNetConfig::desk();
  TrainConfig train = TrainConfig::desk();
  PreprocessConfig preprocess;
  std::filesystem::path data_root;  // dataset root (audio/, meta/, manifest.json)
  std::filesystem::path run_dir = "run";
  std::filesystem::path checkpoint;  // empty: <run_dir>/checkpoint/best.fnackpt
  int threads = 0;                   // 0 keeps the runtime default
  std::string split = "test";
  double q = 0.9;
  std::string q_grid = "0.1:0.99:0.1";
  std::filesystem::path clip;
  bool verbose = false;

  // "desk", "tiny" or "full".
  static RunConfig from_preset(const std::string& name);
  std::string to_json() const;
  // Accepts a config document or a stamp (whose "config" member is used).
  // Sections overlay the named preset; unknown keys raise ParseError.
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::filesystem::path checkpoint_path() const;
};

extern const char* const kCodeVersion;

// Writes <run_dir>/stamp.json and <run_dir>/stamps/<command>.json.
void write_stamp(const RunConfig& cfg, const std::string& command, const std::string& result_json);

// Ingests and writes <root>/manifest.json. Idempotent.
DatasetManifest ingest_run(const std::filesystem::path& root, const std::filesystem::path& meta_csv = {},
                           int max_classes = 50);

// Loads <data_root>/manifest.json, ingesting first when it is absent.
DatasetManifest load_manifest(const std::filesystem::path& data_root);

TrainSet load_train_set(const DatasetManifest& m, Split split, const PreprocessConfig& pc);
std::vector<EvalClip> load_eval_clips(const DatasetManifest& m, Split split,
                                             const PreprocessConfig& pc);

// The commands return a JSON summary.
std::string train_run(const RunConfig& cfg);
std::string evaluate_run(const RunConfig& cfg);
std::string sweep_run(const RunConfig& cfg);
std::string interpret_run(const RunConfig& cfg);
std::string gen_synth_run(const std::filesystem::path& root, const SynthConfig& sc);

}  // namespace fna
