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

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fna/audio.h"
#include "fna/focalnet.h"
#include "fna/matrix.h"

namespace fna {

// Channel-wise L2 norm of the cached modulator, cropped to the cells that
// cover the unpadded input.
struct ModulationMap {
  Matrix values;  // [H, W], >= 0
};

ModulationMap modulation_map(const ModulatorCache& cache);
ModulationMap modulation_map(const std::optional<ModulatorCache>& cache);

// Linear-interpolation quantile of order q ("type 7"): with the values sorted
// ascending, h = (N - 1) q and the result interpolates between the floor(h)
// and floor(h) + 1 order statistics.
double quantile(std::span<const float> values, double q);
double quantile(std::span<const double> values, double q);

enum class ThresholdMode {
  // Bilinearly upsample the map to the spectrogram grid, then threshold at
  // the q-quantile of the upsampled values.
  kUpsampleThenThreshold,
  // Threshold the map at its own resolution, then nearest-upsample the mask.
  kThresholdThenUpsample,
};

struct InterpretationMask {
  Matrix mask;  // entries 0 or 1, [bins, frames]
  double q = 0;
  double threshold = 0;  // M_q on the grid where it was taken
  ThresholdMode mode = ThresholdMode::kUpsampleThenThreshold;

  std::size_t retained() const;
  double retained_fraction() const;
};

// Cells with M >= M_q are kept, so ties at the threshold are retained.
InterpretationMask threshold_mask(const ModulationMap& map, double q,
                                  std::size_t rows, std::size_t cols,
                                  ThresholdMode mode = ThresholdMode::kUpsampleThenThreshold);

enum class MaskMode {
  kForModel,      // log_mag * mask
  kForListening,  // masked cells set to log(eps), i.e. silence
};

Spectrogram apply_mask(const Spectrogram& s, const InterpretationMask& m, MaskMode mode);
Matrix mask_for_model(const Matrix& log_mag, const Matrix& mask);
Matrix mask_for_listening(const Matrix& log_mag, const Matrix& mask, double eps);
// log_mag * (1 - mask): the input with the interpretation removed.
Matrix mask_complement(const Matrix& log_mag, const Matrix& mask);

struct ListenableInterpretation {
  Spectrogram spectrogram;     // of the preprocessed clip
  InterpretationMask mask;
  Spectrogram interpretation;  // listening-mode masked spectrogram
  Waveform audio;
  int predicted_class = -1;
  std::vector<double> probabilities;
};

// Resample and analyse the clip, classify it with the modulator cached,
// threshold the modulation map at q and resynthesise the retained cells.
ListenableInterpretation listenable_interpretation(
    const Waveform& clip, const FocalNet<float>& model, double q,
    const PreprocessConfig& preprocess,
    ThresholdMode mode = ThresholdMode::kUpsampleThenThreshold);

}  // namespace fna
