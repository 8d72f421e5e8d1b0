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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fna/audio.h"

namespace fna {

enum class Split { kTrain, kVal, kTest };

// Folds 1-3 train, 4 validation, 5 test.
Split split_of_fold(int fold);
const char* split_name(Split s);
Split parse_split(const std::string& name);

struct ClipRecord {
  std::string filename;  // relative to <root>/audio
  int label = -1;
  std::string category;
  int fold = 0;
  int sample_rate = 0;  // as found on disk
  std::size_t num_samples = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ClipRecord> clips;
  std::vector<std::string> class_names;  // index = label

  int num_classes() const { return static_cast<int>(class_names.size()); }
  std::vector<const ClipRecord*> split(Split s) const;
  std::filesystem::path audio_path(const ClipRecord& c) const;
  // Sorted distinct sample rates of the source files.
  std::vector<int> sample_rates() const;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

struct IngestOptions {
  int max_classes = 50;  // labels must lie in [0, max_classes)
  bool probe_audio = true;
};

// Reads <root>/meta/esc50.csv (or `meta_csv`) with columns filename, fold,
// target and category. Raises ValidationError listing every offending row
// (fold outside 1-5, label out of range, duplicate or missing file).
DatasetManifest ingest(const std::filesystem::path& root, const std::filesystem::path& meta_csv = {},
                       const IngestOptions& options = {});

// Synthetic classes with known time-frequency signatures.
enum class SynthClass { kTone500, kTone2000, kWhiteNoise, kAmTone1000 };
const char* synth_class_name(SynthClass c);
// Carrier frequency in Hz; 0 for white noise.
double synth_tone_hz(SynthClass c);

struct SynthConfig {
  int num_classes = 4;  // first n of the four classes
  int clips_per_class = 100;
  double duration_s = 5.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
  double noise_floor = 1e-3;  // std of the additive Gaussian floor
  WavEncoding encoding = WavEncoding::kPcm16;
};

Waveform synthesize_clip(SynthClass c, const SynthConfig& cfg, std::uint64_t clip_seed);

// Writes <root>/audio/*.wav and <root>/meta/esc50.csv; folds are assigned
// round-robin within each class. Returns the ingested manifest.
DatasetManifest generate_synthetic(const std::filesystem::path& root, const SynthConfig& cfg = {});

}  // namespace fna
