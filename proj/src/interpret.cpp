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

#include "fna/interpret.h"

#include <algorithm>
#include <cmath>

#include "fna/error.h"
#include "fna/ops.h"

namespace fna {
namespace {

template <class V>
double quantile_impl(std::span<const V> values, double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw ConfigError("quantile order must lie in [0, 1], got " + std::to_string(q));
  }
  if (values.empty()) throw DimensionError("quantile of an empty set");
  std::vector<V> v(values.begin(), values.end());
  const double h = static_cast<double>(v.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(v.begin(), v.begin() + lo, v.end());
  const double x_lo = v[lo];
  if (lo + 1 >= v.size()) return x_lo;
  const double x_hi = *std::min_element(v.begin() + lo + 1, v.end());
  const double t = x_lo + (h - static_cast<double>(lo)) * (x_hi - x_lo);
  return std::min(t, x_hi);
}

// align-corners bilinear upsampling carried out in double precision so that
// order relations between cells survive a rescaling of the map.
std::vector<double> upsample(const Matrix& m, std::size_t rows, std::size_t cols) {
  auto coord = [](std::size_t o, std::size_t in, std::size_t out) {
    return out == 1 ? 0.0
                    : static_cast<double>(o) * static_cast<double>(in - 1) /
                          static_cast<double>(out - 1);
  };
  std::vector<double> out(rows * cols);
  std::vector<std::size_t> c0(cols), c1(cols);
  std::vector<double> fx(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    const double s = coord(j, m.cols, cols);
    c0[j] = std::min(static_cast<std::size_t>(std::floor(s)), m.cols - 1);
    c1[j] = std::min(c0[j] + 1, m.cols - 1);
    fx[j] = s - static_cast<double>(c0[j]);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const double s = coord(i, m.rows, rows);
    const std::size_t r0 = std::min(static_cast<std::size_t>(std::floor(s)), m.rows - 1);
    const std::size_t r1 = std::min(r0 + 1, m.rows - 1);
    const double fy = s - static_cast<double>(r0);
    for (std::size_t j = 0; j < cols; ++j) {
      const double a = m(r0, c0[j]), b = m(r0, c1[j]);
      const double c = m(r1, c0[j]), d = m(r1, c1[j]);
      const double top = a + fx[j] * (b - a);
      const double bot = c + fx[j] * (d - c);
      out[i * cols + j] = top + fy * (bot - top);
    }
  }
  return out;
}

}  // namespace

ModulationMap modulation_map(const ModulatorCache& cache) {
  if (cache.modulator.empty() || cache.channels == 0) {
    throw UsageError("modulation_map: modulator cache is empty");
  }
  const std::size_t H = cache.height, W = cache.width, C = cache.channels;
  const std::size_t vh = cache.valid_height ? std::min(cache.valid_height, H) : H;
  const std::size_t vw = cache.valid_width ? std::min(cache.valid_width, W) : W;
  ModulationMap map;
  map.values = Matrix(vh, vw);
  for (std::size_t r = 0; r < vh; ++r) {
    for (std::size_t c = 0; c < vw; ++c) {
      double s = 0;
      for (std::size_t k = 0; k < C; ++k) {
        const double m = cache.modulator[(k * H + r) * W + c];
        s += m * m;
      }
      map.values(r, c) = static_cast<float>(std::sqrt(s));
    }
  }
  return map;
}

ModulationMap modulation_map(const std::optional<ModulatorCache>& cache) {
  if (!cache) throw UsageError("modulation_map: forward pass ran without modulator caching");
  return modulation_map(*cache);
}

double quantile(std::span<const float> values, double q) { return quantile_impl(values, q); }
double quantile(std::span<const double> values, double q) { return quantile_impl(values, q); }

std::size_t InterpretationMask::retained() const {
  return static_cast<std::size_t>(std::count(mask.data.begin(), mask.data.end(), 1.0f));
}

double InterpretationMask::retained_fraction() const {
  return mask.size() ? static_cast<double>(retained()) / static_cast<double>(mask.size()) : 0.0;
}

InterpretationMask threshold_mask(const ModulationMap& map, double q,
                                  std::size_t rows, std::size_t cols, ThresholdMode mode) {
  if (map.values.size() == 0) throw DimensionError("threshold_mask: empty modulation map");
  if (rows == 0 || cols == 0) throw DimensionError("threshold_mask: empty target shape");
  InterpretationMask out;
  out.q = q;
  out.mode = mode;
  out.mask = Matrix(rows, cols);
  if (mode == ThresholdMode::kUpsampleThenThreshold) {
    const auto up = upsample(map.values, rows, cols);
    out.threshold = quantile(std::span<const double>(up), q);
    for (std::size_t i = 0; i < up.size(); ++i)
      out.mask.data[i] = up[i] >= out.threshold ? 1.0f : 0.0f;
  } else {
    const Matrix& m = map.values;
    out.threshold = quantile(std::span<const float>(m.data), q);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t r = std::min(i * m.rows / rows, m.rows - 1);
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t c = std::min(j * m.cols / cols, m.cols - 1);
        out.mask(i, j) = static_cast<double>(m(r, c)) >= out.threshold ? 1.0f : 0.0f;
      }
    }
  }
  return out;
}

Matrix mask_for_model(const Matrix& log_mag, const Matrix& mask) {
  if (!log_mag.same_shape(mask)) throw DimensionError("mask_for_model: shape mismatch");
  Matrix out = log_mag;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask.data[i];
  return out;
}

Matrix mask_for_listening(const Matrix& log_mag, const Matrix& mask, double eps) {
  if (!log_mag.same_shape(mask)) throw DimensionError("mask_for_listening: shape mismatch");
  const float floor_value = static_cast<float>(std::log(eps));
  Matrix out = log_mag;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask.data[i] == 0.0f) out.data[i] = floor_value;
  return out;
}

Matrix mask_complement(const Matrix& log_mag, const Matrix& mask) {
  if (!log_mag.same_shape(mask)) throw DimensionError("mask_complement: shape mismatch");
  Matrix out = log_mag;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= 1.0f - mask.data[i];
  return out;
}

Spectrogram apply_mask(const Spectrogram& s, const InterpretationMask& m, MaskMode mode) {
  Spectrogram out;
  out.params = s.params;
  out.phase = s.phase;
  out.log_mag = mode == MaskMode::kForModel ? mask_for_model(s.log_mag, m.mask)
                                            : mask_for_listening(s.log_mag, m.mask, s.params.eps);
  return out;
}

ListenableInterpretation listenable_interpretation(const Waveform& clip,
                                                   const FocalNet<float>& model, double q,
                                                   const PreprocessConfig& preprocess_cfg,
                                                   ThresholdMode mode) {
  NoGradGuard no_grad;
  ListenableInterpretation out;
  out.spectrogram = preprocess(clip, preprocess_cfg);
  auto input = to_model_input(out.spectrogram, preprocess_cfg.input_size,
                              preprocess_cfg.channels);
  auto fwd = model.forward(input, true);
  auto probs = ops::softmax(fwd.logits);
  out.probabilities.assign(probs.data().begin(), probs.data().end());
  out.predicted_class = static_cast<int>(
      std::max_element(out.probabilities.begin(), out.probabilities.end()) -
      out.probabilities.begin());
  out.mask = threshold_mask(modulation_map(fwd.cache), q, out.spectrogram.bins(),
                            out.spectrogram.frames(), mode);
  out.interpretation = apply_mask(out.spectrogram, out.mask, MaskMode::kForListening);
  out.audio = istft_reconstruct(out.interpretation.log_mag, out.interpretation.phase,
                                out.interpretation.params);
  return out;
}

}  // namespace fna
