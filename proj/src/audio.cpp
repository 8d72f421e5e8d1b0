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

#include "fna/audio.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>

#include "fna/error.h"
#include "fna/ops.h"

namespace fna {
namespace {

// FFTW's planner is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw ParseError("wav: truncated " + std::string(what) + " at byte offset " +
                       std::to_string(pos_) + " (need " + std::to_string(n) +
                       " bytes, have " + std::to_string(remaining()) + ")");
    }
  }
  std::string tag(const char* what) {
    need(4, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  void skip(std::size_t n, const char* what) {
    need(n, what);
    pos_ += n;
  }
  const std::uint8_t* here() const { return bytes_.data() + pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_tag(std::vector<std::uint8_t>& out, const char* t) { out.insert(out.end(), t, t + 4); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

// Hann window of win_length centered inside an n_fft frame.
std::vector<double> framed_window(const StftParams& p) {
  std::vector<double> w(static_cast<std::size_t>(p.n_fft), 0.0);
  const int offset = (p.n_fft - p.win_length) / 2;
  for (int i = 0; i < p.win_length; ++i) {
    w[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / p.win_length);
  }
  return w;
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

Waveform parse_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.tag("RIFF header") != "RIFF") throw ParseError("wav: missing RIFF tag at byte offset 0");
  r.u32("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw ParseError("wav: missing WAVE tag at byte offset 8");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (true) {
    const std::size_t chunk_at = r.offset();
    const std::string id = r.tag("chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw ParseError("wav: fmt chunk too small at byte offset " + std::to_string(chunk_at));
      r.need(size, "fmt chunk");
      format = r.u16("format");
      channels = r.u16("channels");
      rate = r.u32("sample rate");
      r.u32("byte rate");
      r.u16("block align");
      bits = r.u16("bits per sample");
      std::size_t rest = size - 16;
      if (format == 0xFFFE && rest >= 10) {
        r.u16("cb size");
        r.u16("valid bits");
        r.u32("channel mask");
        format = r.u16("sub format");
        rest -= 10;
      }
      r.skip(rest, "fmt chunk");
      if (size % 2) r.skip(1, "chunk padding");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("wav: data chunk before fmt at byte offset " + std::to_string(chunk_at));
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      if (!pcm16 && !f32) {
        throw ParseError("wav: unsupported codec (format " + std::to_string(format) +
                         ", " + std::to_string(bits) + " bits)");
      }
      if (channels == 0 || rate == 0) throw ParseError("wav: zero channels or sample rate");
      r.need(size, "data chunk");
      const std::size_t bytes_per = bits / 8;
      const std::size_t frames = size / (bytes_per * channels);
      if (frames == 0) throw ParseError("wav: empty data chunk at byte offset " + std::to_string(chunk_at));
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(frames);
      const std::uint8_t* p = r.here();
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0;
        for (std::size_t c = 0; c < channels; ++c) {
          const std::uint8_t* s = p + (f * channels + c) * bytes_per;
          if (pcm16) {
            acc += static_cast<std::int16_t>(s[0] | (s[1] << 8)) / 32768.0;
          } else {
            std::uint32_t u = s[0] | (s[1] << 8) | (s[2] << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
            float v;
            std::memcpy(&v, &u, 4);
            acc += v;
          }
        }
        w.samples[f] = channels == 1 ? static_cast<float>(acc) : static_cast<float>(acc / channels);
      }
      if (!all_finite(w.samples)) throw ParseError("wav: non-finite samples");
      return w;
    } else {
      r.skip(size + (size % 2), "chunk body");
    }
  }
}

Waveform load_wav(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return parse_wav(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const Waveform& w, WavEncoding encoding) {
  const bool f32 = encoding == WavEncoding::kFloat32;
  const std::uint16_t bits = f32 ? 32 : 16;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * bits / 8);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, f32 ? 3 : 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * bits / 8);
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float v : w.samples) {
    if (f32) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(out, u);
    } else {
      const double c = std::clamp(static_cast<double>(v), -1.0, 1.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
    }
  }
  return out;
}

void save_wav(const Waveform& w, const std::filesystem::path& path, WavEncoding encoding) {
  write_file(path, encode_wav(w, encoding));
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ConfigError("resample: target rate must be positive");
  if (w.sample_rate <= 0) throw ConfigError("resample: source rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const std::int64_t src = w.sample_rate, dst = target_rate;
  const std::int64_t g = std::gcd(src, dst);
  const std::int64_t up = dst / g, down = src / g;  // out n sits at input n*down/up
  const double cutoff = std::min(1.0, static_cast<double>(dst) / src) * 0.95;
  constexpr int kZeroCrossings = 24;
  const int half = static_cast<int>(std::ceil(kZeroCrossings / cutoff));
  const std::size_t taps = 2 * half + 1;

  auto tap_row = [&](double frac, double* row) {
    for (int j = -half; j <= half; ++j) {
      const double d = frac - j;
      const double u = d / (half + 1);
      const double win = std::abs(u) < 1.0 ? 0.5 + 0.5 * std::cos(std::numbers::pi * u) : 0.0;
      row[j + half] = cutoff * sinc(cutoff * d) * win;
    }
  };
  const bool table = up <= 4096;
  std::vector<double> phases(table ? up * taps : 0);
  if (table) {
    for (std::int64_t p = 0; p < up; ++p) tap_row(static_cast<double>(p) / up, &phases[p * taps]);
  }

  Waveform out;
  out.sample_rate = target_rate;
  const std::size_t n_in = w.samples.size();
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * dst / static_cast<double>(src)));
  out.samples.resize(n_out);
  std::vector<double> scratch(taps);
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::int64_t pos = static_cast<std::int64_t>(n) * down;
    const std::int64_t base = pos / up;
    const std::int64_t phase = pos % up;
    const double* h;
    if (table) {
      h = &phases[phase * taps];
    } else {
      tap_row(static_cast<double>(phase) / up, scratch.data());
      h = scratch.data();
    }
    double acc = 0;
    for (int j = -half; j <= half; ++j) {
      const std::int64_t k = base + j;
      if (k < 0 || k >= static_cast<std::int64_t>(n_in)) continue;
      acc += h[j + half] * w.samples[k];
    }
    out.samples[n] = static_cast<float>(acc);
  }
  return out;
}

StftParams StftParams::from_ms(int sample_rate, int n_fft, double win_ms, double hop_ms) {
  StftParams p;
  p.sample_rate = sample_rate;
  p.n_fft = n_fft;
  p.win_length = static_cast<int>(std::lround(win_ms * sample_rate / 1000.0));
  p.hop_length = static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  return p;
}

std::size_t StftParams::frames_for(std::size_t samples) const {
  if (center) return 1 + samples / hop_length;
  if (samples < static_cast<std::size_t>(n_fft)) return 0;
  return 1 + (samples - n_fft) / hop_length;
}

void StftParams::validate() const {
  if (n_fft < 2 || n_fft % 2) throw ConfigError("stft: n_fft must be even and >= 2");
  if (win_length < 1 || win_length > n_fft) throw ConfigError("stft: win_length must be in [1, n_fft]");
  if (hop_length < 1) throw ConfigError("stft: hop_length must be >= 1");
  if (sample_rate < 1) throw ConfigError("stft: sample_rate must be >= 1");
  if (!(eps > 0)) throw ConfigError("stft: eps must be positive");
}

bool operator==(const StftParams& a, const StftParams& b) {
  return a.n_fft == b.n_fft && a.win_length == b.win_length &&
         a.hop_length == b.hop_length && a.sample_rate == b.sample_rate &&
         a.center == b.center && a.eps == b.eps && a.num_samples == b.num_samples;
}

Spectrogram stft(const Waveform& w, const StftParams& params) {
  params.validate();
  const std::size_t n = w.samples.size();
  if (n < static_cast<std::size_t>(params.win_length)) {
    throw ValidationError("stft: clip of " + std::to_string(n) +
                          " samples is shorter than one window (" +
                          std::to_string(params.win_length) + ")");
  }
  const std::size_t frames = params.frames_for(n);
  if (frames == 0) throw ValidationError("stft: clip shorter than one frame");
  const int n_fft = params.n_fft;
  const int bins = params.freq_bins();
  const auto window = framed_window(params);
  const std::ptrdiff_t pad = params.center ? n_fft / 2 : 0;

  Spectrogram s;
  s.params = params;
  s.params.num_samples = n;
  s.log_mag = Matrix(bins, frames);
  s.phase = Matrix(bins, frames);

  double* buf = fftw_alloc_real(n_fft);
  fftw_complex* spec = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n_fft, buf, spec, FFTW_ESTIMATE);
  }
  for (std::size_t t = 0; t < frames; ++t) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(t * params.hop_length) - pad;
    for (int i = 0; i < n_fft; ++i) {
      const std::ptrdiff_t idx = reflect_index(start + i, static_cast<std::ptrdiff_t>(n));
      buf[i] = window[i] * w.samples[idx];
    }
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k) {
      const double re = spec[k][0], im = spec[k][1];
      s.log_mag(k, t) = static_cast<float>(std::log(std::hypot(re, im) + params.eps));
      s.phase(k, t) = static_cast<float>(std::atan2(im, re));
    }
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  fftw_free(spec);
  return s;
}

Waveform istft_reconstruct(const Matrix& log_mag, const Matrix& phase,
                           const StftParams& params) {
  params.validate();
  if (!log_mag.same_shape(phase)) throw DimensionError("istft: log_mag and phase shapes differ");
  const int n_fft = params.n_fft;
  const int bins = params.freq_bins();
  if (log_mag.rows != static_cast<std::size_t>(bins)) {
    throw DimensionError("istft: " + std::to_string(log_mag.rows) + " rows for n_fft " +
                         std::to_string(n_fft));
  }
  const std::size_t frames = log_mag.cols;
  const std::ptrdiff_t pad = params.center ? n_fft / 2 : 0;
  const std::size_t total = (frames - 1) * params.hop_length + n_fft;
  std::size_t n = params.num_samples;
  if (n == 0) n = total - 2 * pad;
  if (n + pad > total) throw DimensionError("istft: num_samples exceeds the framed length");

  const auto window = framed_window(params);
  std::vector<double> acc(total, 0.0), wsum(total, 0.0);
  fftw_complex* spec = fftw_alloc_complex(bins);
  double* buf = fftw_alloc_real(n_fft);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_c2r_1d(n_fft, spec, buf, FFTW_ESTIMATE);
  }
  for (std::size_t t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      const double mag = std::max(std::exp(static_cast<double>(log_mag(k, t))) - params.eps, 0.0);
      const double ph = phase(k, t);
      spec[k][0] = mag * std::cos(ph);
      spec[k][1] = mag * std::sin(ph);
    }
    fftw_execute(plan);
    const std::size_t start = t * params.hop_length;
    for (int i = 0; i < n_fft; ++i) {
      acc[start + i] += window[i] * buf[i] / n_fft;
      wsum[start + i] += window[i] * window[i];
    }
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(spec);
  fftw_free(buf);

  Waveform out;
  out.sample_rate = params.sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ws = wsum[i + pad];
    if (ws < 1e-8) {
      throw ConfigError("istft: window overlap leaves sample " + std::to_string(i) +
                        " uncovered (hop " + std::to_string(params.hop_length) +
                        ", window " + std::to_string(params.win_length) + ")");
    }
    out.samples[i] = static_cast<float>(acc[i + pad] / ws);
  }
  return out;
}

bool operator==(const PreprocessConfig& a, const PreprocessConfig& b) {
  return a.sample_rate == b.sample_rate && a.stft == b.stft &&
         a.input_size == b.input_size && a.channels == b.channels;
}

Spectrogram preprocess(const Waveform& w, const PreprocessConfig& cfg) {
  StftParams p = cfg.stft;
  p.sample_rate = cfg.sample_rate;
  p.num_samples = 0;
  return stft(resample(w, cfg.sample_rate), p);
}

Tensor<float> to_model_input(const Matrix& log_mag, int out, int channels) {
  if (out < 1 || channels < 1) throw ConfigError("to_model_input: bad output size");
  const std::size_t side = static_cast<std::size_t>(out);
  Matrix r = resize_bilinear(log_mag, side, side);
  const auto [lo, hi] = std::minmax_element(r.data.begin(), r.data.end());
  std::vector<float> values(channels * side * side, 0.0f);
  if (*lo != *hi) {
    double mean = 0;
    for (float v : r.data) mean += v;
    mean /= static_cast<double>(r.size());
    double var = 0;
    for (float v : r.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(r.size());
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < r.size(); ++i)
      values[i] = static_cast<float>((r.data[i] - mean) * inv);
    for (int c = 1; c < channels; ++c)
      std::copy_n(values.begin(), r.size(), values.begin() + c * r.size());
  }
  return Tensor<float>::from(Shape{static_cast<std::size_t>(channels), side, side},
                             std::move(values));
}

Tensor<float> to_model_input(const Spectrogram& s, int out, int channels) {
  return to_model_input(s.log_mag, out, channels);
}

Tensor<float> augment(const Tensor<float>& x, const AugmentPolicy& policy,
                      std::uint64_t seed) {
  if (x.rank() != 3) throw DimensionError("augment: expected [C,F,T]");
  std::vector<float> v(x.data().begin(), x.data().end());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (!(unit(rng) < policy.probability)) return Tensor<float>::from(x.shape(), std::move(v));

  const std::size_t C = x.dim(0), F = x.dim(1), T = x.dim(2);
  const int mode = std::uniform_int_distribution<int>(0, 2)(rng);  // bands, chunks, both
  auto pick_spans = [&](std::size_t extent, int max_count, double max_fraction) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    const int count = std::uniform_int_distribution<int>(1, std::max(1, max_count))(rng);
    const auto max_width = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(max_fraction * static_cast<double>(extent))));
    for (int i = 0; i < count; ++i) {
      const std::size_t width = std::uniform_int_distribution<std::size_t>(1, max_width)(rng);
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, extent - width)(rng);
      spans.emplace_back(start, width);
    }
    return spans;
  };
  if (mode == 0 || mode == 2) {
    for (auto [start, width] : pick_spans(F, policy.max_bands, policy.max_band_fraction))
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t f = start; f < start + width; ++f)
          std::fill_n(v.begin() + (c * F + f) * T, T, 0.0f);
  }
  if (mode == 1 || mode == 2) {
    for (auto [start, width] : pick_spans(T, policy.max_chunks, policy.max_chunk_fraction))
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t f = 0; f < F; ++f)
          std::fill_n(v.begin() + (c * F + f) * T + start, width, 0.0f);
  }
  return Tensor<float>::from(x.shape(), std::move(v));
}

namespace {

template <class U>
void put_raw(std::vector<std::uint8_t>& out, U v) {
  std::uint8_t b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.insert(out.end(), b, b + sizeof(U));
}

template <class U>
U get_raw(ByteReader& r, const char* what) {
  r.need(sizeof(U), what);
  U v;
  std::memcpy(&v, r.here(), sizeof(U));
  r.skip(sizeof(U), what);
  return v;
}

}  // namespace

void write_spectrogram(const Spectrogram& s, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  const char magic[8] = {'F', 'N', 'A', 'S', 'P', 'E', 'C', '1'};
  out.insert(out.end(), magic, magic + 8);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(s.log_mag.rows));
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(s.log_mag.cols));
  put_raw<std::int32_t>(out, s.params.n_fft);
  put_raw<std::int32_t>(out, s.params.win_length);
  put_raw<std::int32_t>(out, s.params.hop_length);
  put_raw<std::int32_t>(out, s.params.sample_rate);
  put_raw<std::int32_t>(out, s.params.center ? 1 : 0);
  put_raw<std::uint64_t>(out, s.params.num_samples);
  put_raw<double>(out, s.params.eps);
  for (float v : s.log_mag.data) put_raw(out, v);
  for (float v : s.phase.data) put_raw(out, v);
  write_file(path, out);
}

Spectrogram read_spectrogram(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  r.need(8, "magic");
  if (std::memcmp(r.here(), "FNASPEC1", 8) != 0) throw ParseError(path.string() + ": not a spectrogram file");
  r.skip(8, "magic");
  Spectrogram s;
  const auto rows = get_raw<std::uint32_t>(r, "rows");
  const auto cols = get_raw<std::uint32_t>(r, "cols");
  s.params.n_fft = get_raw<std::int32_t>(r, "n_fft");
  s.params.win_length = get_raw<std::int32_t>(r, "win_length");
  s.params.hop_length = get_raw<std::int32_t>(r, "hop_length");
  s.params.sample_rate = get_raw<std::int32_t>(r, "sample_rate");
  s.params.center = get_raw<std::int32_t>(r, "center") != 0;
  s.params.num_samples = get_raw<std::uint64_t>(r, "num_samples");
  s.params.eps = get_raw<double>(r, "eps");
  s.log_mag = Matrix(rows, cols);
  s.phase = Matrix(rows, cols);
  for (auto& v : s.log_mag.data) v = get_raw<float>(r, "log_mag");
  for (auto& v : s.phase.data) v = get_raw<float>(r, "phase");
  return s;
}

void write_pgm(const Matrix& m, const std::filesystem::path& path) {
  if (m.size() == 0) throw DimensionError("write_pgm: empty matrix");
  const auto [lo, hi] = std::minmax_element(m.data.begin(), m.data.end());
  const double span = *hi - *lo;
  std::string header = "P5\n" + std::to_string(m.cols) + " " + std::to_string(m.rows) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (std::size_t r = m.rows; r-- > 0;) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double v = span > 0 ? (m(r, c) - *lo) / span : 0.0;
      out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
  }
  write_file(path, out);
}

double snr_db(std::span<const float> reference, std::span<const float> estimate) {
  if (reference.size() != estimate.size()) throw DimensionError("snr_db: length mismatch");
  double sig = 0, err = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    sig += static_cast<double>(reference[i]) * reference[i];
    const double d = static_cast<double>(reference[i]) - estimate[i];
    err += d * d;
  }
  if (err == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / err);
}

double rms(std::span<const float> x) {
  if (x.empty()) return 0;
  double s = 0;
  for (float v : x) s += static_cast<double>(v) * v;
  return std::sqrt(s / x.size());
}

}  // namespace fna
