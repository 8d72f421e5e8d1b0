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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fna/matrix.h"
#include "fna/tensor.h"

namespace fna {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;
};

enum class WavEncoding { kPcm16, kFloat32 };

// RIFF/WAVE with 16-bit PCM or 32-bit float samples. Multi-channel input is
// downmixed to mono by the channel mean.
Waveform parse_wav(std::span<const std::uint8_t> bytes);
Waveform load_wav(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_wav(const Waveform& w, WavEncoding encoding);
void save_wav(const Waveform& w, const std::filesystem::path& path,
              WavEncoding encoding = WavEncoding::kFloat32);

// Windowed-sinc resampler evaluated through a polyphase tap table. Output
// length is round(len * target / source).
Waveform resample(const Waveform& w, int target_rate);

// Framing parameters, all in samples. The defaults give 513 x 431 for a 5 s
// clip at 16 kHz: a 23 ms Hann window (368 samples) zero-padded to 1024, and
// a hop of 186 samples (11.6 ms, the 512-sample hop of a 1024-point frame at
// 44.1 kHz carried over to 16 kHz). Frames are centered with reflect padding
// of n_fft / 2 on both sides, so frames = 1 + floor(samples / hop).
struct StftParams {
  int n_fft = 1024;
  int win_length = 368;
  int hop_length = 186;
  int sample_rate = 16000;
  bool center = true;
  double eps = 1e-10;  // log(|X| + eps)
  // Length of the analysed signal; set by stft() and used to trim istft.
  std::size_t num_samples = 0;

  static StftParams from_ms(int sample_rate, int n_fft, double win_ms, double hop_ms);
  int freq_bins() const { return n_fft / 2 + 1; }
  std::size_t frames_for(std::size_t samples) const;
  void validate() const;
};

bool operator==(const StftParams& a, const StftParams& b);

struct Spectrogram {
  Matrix log_mag;  // [freq_bins, frames]
  Matrix phase;    // [freq_bins, frames], radians
  StftParams params;

  std::size_t bins() const { return log_mag.rows; }
  std::size_t frames() const { return log_mag.cols; }
};

Spectrogram stft(const Waveform& w, const StftParams& params = {});

// Inverse of stft() from a (possibly masked) log magnitude and the original
// phase: magnitude = max(exp(log_mag) - eps, 0), weighted overlap-add with
// the analysis window, normalised by the summed squared window.
Waveform istft_reconstruct(const Matrix& log_mag, const Matrix& phase,
                           const StftParams& params);

// Everything between a decoded clip and the classifier input.
struct PreprocessConfig {
  int sample_rate = 16000;
  StftParams stft;
  int input_size = 224;
  int channels = 3;
};

bool operator==(const PreprocessConfig& a, const PreprocessConfig& b);

// Resample to cfg.sample_rate, then stft().
Spectrogram preprocess(const Waveform& w, const PreprocessConfig& cfg);

// Bilinear shrink to out x out, per-input standardisation (zero mean, unit
// variance; a constant input maps to zeros), then `channels` replicas:
// [channels, out, out].
Tensor<float> to_model_input(const Matrix& log_mag, int out = 224, int channels = 3);
Tensor<float> to_model_input(const Spectrogram& s, int out = 224, int channels = 3);

// Frequency-band / time-chunk dropout on a model input [C, F, T].
struct AugmentPolicy {
  double probability = 0.75;
  int max_bands = 3;
  double max_band_fraction = 0.15;
  int max_chunks = 3;
  double max_chunk_fraction = 0.15;
};

Tensor<float> augment(const Tensor<float>& x, const AugmentPolicy& policy,
                      std::uint64_t seed);

// Raw spectrogram container, little-endian:
//   char[8]  "FNASPEC1"
//   u32      rows (freq bins), u32 cols (frames)
//   i32      n_fft, win_length, hop_length, sample_rate, center (0/1)
//   u64      num_samples
//   f64      eps
//   f32      log_mag[rows*cols], then phase[rows*cols], row-major
void write_spectrogram(const Spectrogram& s, const std::filesystem::path& path);
Spectrogram read_spectrogram(const std::filesystem::path& path);

// Binary greymap (P5), min-max scaled to 0..255, highest row index at the top
// of the image so low frequencies sit at the bottom.
void write_pgm(const Matrix& m, const std::filesystem::path& path);

double snr_db(std::span<const float> reference, std::span<const float> estimate);
double rms(std::span<const float> x);

}  // namespace fna
