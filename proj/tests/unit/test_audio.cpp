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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"
#include "fna/audio.h"
#include "fna/error.h"

using fna::Matrix;
using fna::StftParams;
using fna::Waveform;

namespace {

Waveform sine(double hz, int rate, std::size_t n, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  return w;
}

Waveform noise(std::uint64_t seed, std::size_t n, int rate = 16000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (auto& s : w.samples) s = u(rng);
  return w;
}

std::size_t peak_bin(const fna::Spectrogram& s, std::size_t frame) {
  std::size_t best = 0;
  for (std::size_t b = 1; b < s.bins(); ++b)
    if (s.log_mag(b, frame) > s.log_mag(best, frame)) best = b;
  return best;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "fna_test_audio";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::vector<std::uint8_t> stereo_pcm16(const std::vector<std::int16_t>& interleaved, int rate) {
  std::vector<std::uint8_t> b{'R', 'I', 'F', 'F'};
  put_u32(b, static_cast<std::uint32_t>(36 + 2 * interleaved.size()));
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<std::uint8_t>(c));
  put_u32(b, 16);
  put_u16(b, 1);
  put_u16(b, 2);
  put_u32(b, static_cast<std::uint32_t>(rate));
  put_u32(b, static_cast<std::uint32_t>(rate * 4));
  put_u16(b, 4);
  put_u16(b, 16);
  for (char c : std::string("data")) b.push_back(static_cast<std::uint8_t>(c));
  put_u32(b, static_cast<std::uint32_t>(2 * interleaved.size()));
  for (auto s : interleaved) put_u16(b, static_cast<std::uint16_t>(s));
  return b;
}

}  // namespace

TEST_CASE("wav round trip and downmix") {
  auto w = noise(1, 4000);
  auto p = temp_path("roundtrip.wav");
  fna::save_wav(w, p, fna::WavEncoding::kFloat32);
  auto r = fna::load_wav(p);
  REQUIRE(r.samples.size() == w.samples.size());
  CHECK(r.sample_rate == 16000);
  double m = 0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) m = std::max(m, double(std::abs(r.samples[i] - w.samples[i])));
  CHECK(m < 1e-7);

  auto st = fna::parse_wav(stereo_pcm16({16384, 0, -16384, 8192}, 8000));
  REQUIRE(st.samples.size() == 2);
  CHECK(st.samples[0] == doctest::Approx(0.25));
  CHECK(st.samples[1] == doctest::Approx(-0.125));
  CHECK(st.sample_rate == 8000);

  auto bytes = fna::encode_wav(w, fna::WavEncoding::kPcm16);
  bytes.resize(30);
  try {
    fna::parse_wav(bytes);
    FAIL("truncated file parsed");
  } catch (const fna::ParseError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

TEST_CASE("resampling") {
  auto w = sine(1000, 44100, 5 * 44100);
  auto r = fna::resample(w, 16000);
  CHECK(r.samples.size() == 80000);
  CHECK(r.sample_rate == 16000);
  auto s = fna::stft(r);
  CHECK(std::abs(static_cast<long>(peak_bin(s, 200)) - 64) <= 1);

  auto same = fna::resample(r, 16000);
  CHECK(same.samples == r.samples);
  CHECK_THROWS_AS(fna::resample(r, 0), fna::ConfigError);
}

TEST_CASE("stft sizes and conventions") {
  StftParams p;
  CHECK(p.win_length == 368);
  CHECK(p.n_fft == 1024);
  CHECK(p.eps == 1e-10);
  auto s = fna::stft(noise(2, 80000));
  CHECK(s.bins() == 513);
  CHECK(s.frames() == 431);
  CHECK(s.phase.rows == 513);
  CHECK(s.phase.cols == 431);

  for (int n_fft : {256, 512, 2048}) {
    StftParams q;
    q.n_fft = n_fft;
    q.win_length = n_fft / 2;
    q.hop_length = n_fft / 4;
    CHECK(fna::stft(noise(3, 16000), q).bins() == static_cast<std::size_t>(n_fft / 2 + 1));
  }

  auto z = fna::stft(Waveform{std::vector<float>(16000, 0.0f), 16000});
  for (float v : z.log_mag.data) CHECK(v == doctest::Approx(std::log(1e-10)));

  CHECK_THROWS_AS(fna::stft(Waveform{std::vector<float>(100, 0.1f), 16000}), fna::ValidationError);
  CHECK(StftParams::from_ms(16000, 1024, 23, 11).win_length == 368);
}

TEST_CASE("sine peak bin") {
  auto s = fna::stft(sine(2000, 16000, 80000));
  for (std::size_t f : {10u, 200u, 420u}) CHECK(peak_bin(s, f) == 128);
}

TEST_CASE("sine energy within +-1 bin of the analytic bin is at least 80%") {
  // Hann leakage bound, measured on interior frames.
  for (double hz : {500.0, 1000.0, 2000.0, 4000.0}) {
    auto s = fna::stft(sine(hz, 16000, 80000));
    const long bin = std::lround(hz * 1024 / 16000);
    double near = 0, total = 0;
    for (std::size_t f = 5; f + 5 < s.frames(); ++f)
      for (std::size_t b = 0; b < s.bins(); ++b) {
        const double mag = std::max(std::exp(double(s.log_mag(b, f))) - 1e-10, 0.0);
        total += mag * mag;
        if (std::abs(static_cast<long>(b) - bin) <= 1) near += mag * mag;
      }
    INFO(hz << " Hz: " << near / total);
    CHECK(near / total >= 0.8);
  }
}

TEST_CASE("istft reconstruction") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto w = noise(100 + seed, 80000);
    auto s = fna::stft(w);
    auto r = fna::istft_reconstruct(s.log_mag, s.phase, s.params);
    REQUIRE(r.samples.size() == w.samples.size());
    CHECK(fna::snr_db(w.samples, r.samples) >= 30.0);
  }

  auto w = sine(700, 16000, 32000, 0.3);
  auto s = fna::stft(w);
  Matrix floor(s.bins(), s.frames(), static_cast<float>(std::log(1e-10)));
  auto silent = fna::istft_reconstruct(floor, s.phase, s.params);
  CHECK(fna::rms(silent.samples) < 1e-3 * fna::rms(w.samples));

  Matrix doubled = s.log_mag;
  for (auto& v : doubled.data) v += static_cast<float>(std::log(2.0));
  auto base = fna::istft_reconstruct(s.log_mag, s.phase, s.params);
  auto twice = fna::istft_reconstruct(doubled, s.phase, s.params);
  CHECK(fna::rms(twice.samples) / fna::rms(base.samples) == doctest::Approx(2.0).epsilon(0.05));

  CHECK_THROWS_AS(fna::istft_reconstruct(s.log_mag, Matrix(3, 3), s.params), fna::DimensionError);
}

TEST_CASE("model input packing") {
  auto s = fna::stft(noise(4, 80000));
  auto x = fna::to_model_input(s, 224, 3);
  CHECK(x.shape() == fna::Shape{3, 224, 224});
  const std::size_t plane = 224 * 224;
  double mu = 0, var = 0;
  for (std::size_t i = 0; i < plane; ++i) {
    CHECK(x.data()[i] == x.data()[plane + i]);
    CHECK(x.data()[i] == x.data()[2 * plane + i]);
    mu += x.data()[i];
  }
  mu /= plane;
  for (std::size_t i = 0; i < plane; ++i) var += std::pow(x.data()[i] - mu, 2) / plane;
  CHECK(std::abs(mu) < 1e-5);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-4));

  auto c = fna::to_model_input(Matrix(513, 431, -3.0f), 224, 3);
  for (float v : c.data()) CHECK(v == 0.0f);

  // Already at model size: only standardization changes values.
  std::mt19937_64 rng(5);
  std::normal_distribution<float> nd(2.0f, 3.0f);
  Matrix m(224, 224);
  for (auto& v : m.data) v = nd(rng);
  auto y = fna::to_model_input(m, 224, 1);
  double mm = 0, vv = 0;
  for (float v : m.data) mm += v / double(plane);
  for (float v : m.data) vv += std::pow(v - mm, 2) / double(plane);
  double worst = 0;
  for (std::size_t i = 0; i < plane; ++i)
    worst = std::max(worst, std::abs(y.data()[i] - (m.data[i] - mm) / std::sqrt(vv)));
  CHECK(worst < 1e-4);
}

TEST_CASE("augmentation") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0.5f, 1.5f);
  std::vector<float> v(3 * 40 * 50);
  for (auto& e : v) e = u(rng);
  auto x = fna::Tensor<float>::from({3, 40, 50}, v);

  fna::AugmentPolicy off;
  off.probability = 0;
  auto same = fna::augment(x, off, 1);
  CHECK(std::equal(same.data().begin(), same.data().end(), x.data().begin()));

  fna::AugmentPolicy always;
  always.probability = 1;
  int changed_runs = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto a = fna::augment(x, always, seed);
    auto b = fna::augment(x, always, seed);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    std::vector<bool> row_zero(40, true), col_zero(50, true);
    bool any = false;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t f = 0; f < 40; ++f)
        for (std::size_t t = 0; t < 50; ++t) {
          const std::size_t i = (c * 40 + f) * 50 + t;
          const float av = a.data()[i];
          CHECK((av == 0.0f || av == x.data()[i]));
          if (av != 0.0f) row_zero[f] = col_zero[t] = false;
          any = any || av == 0.0f;
        }
    for (std::size_t i = 0; i < a.numel(); ++i) {
      if (a.data()[i] != 0.0f) continue;
      const std::size_t f = (i / 50) % 40, t = i % 50;
      CHECK((row_zero[f] || col_zero[t]));
    }
    std::size_t rows = 0, cols = 0;
    for (bool r : row_zero) rows += r;
    for (bool c : col_zero) cols += c;
    CHECK(rows <= 3 * 6);  // 1-3 bands of at most 15% of 40 rows
    CHECK(cols <= 3 * 7);
    changed_runs += any;
  }
  CHECK(changed_runs == 30);
}

TEST_CASE("spectrogram container round trip") {
  auto s = fna::stft(noise(7, 8000));
  auto p = temp_path("s.fnaspec");
  fna::write_spectrogram(s, p);
  auto r = fna::read_spectrogram(p);
  CHECK(r.log_mag == s.log_mag);
  CHECK(r.phase == s.phase);
  CHECK(r.params == s.params);
}
