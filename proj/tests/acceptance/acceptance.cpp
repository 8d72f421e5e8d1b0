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

// Acceptance runner: one PASS/FAIL line per criterion, followed by the
// measured quantities. Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fna/audio.h"
#include "fna/checkpoint.h"
#include "fna/dataset.h"
#include "fna/fna.h"
#include "fna/interpret.h"
#include "fna/metrics.h"
#include "fna/workflow.h"
#include "json.hpp"
#include "support/oracles.h"

namespace fs = std::filesystem;
namespace ft = fna::testing;
using nlohmann::json;

namespace {

struct Criterion {
  explicit Criterion(std::string n = {}) : name(std::move(n)) {}

  std::string name;
  bool pass = true;
  double seconds = 0;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    details.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { details.push_back("     " + what); }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

void print(const Criterion& c) {
  std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "  (" << fmt(c.seconds, 3) << " s)\n";
  for (const auto& d : c.details) std::cout << "    " << d << "\n";
  std::cout.flush();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Stops with the library's message when a C API call fails.
struct ApiError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string call(const char* what, const std::function<fna_status(char**)>& f) {
  char* out = nullptr;
  const fna_status st = f(&out);
  std::string text = out ? out : "";
  fna_string_free(out);
  if (st != FNA_OK)
    throw ApiError(std::string(what) + " failed (" + fna_status_name(st) + "): " + fna_last_error());
  return text;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void group_summary(Criterion& c, const std::string& label, const std::vector<ft::GradResult>& r,
                   double tol) {
  const double worst = ft::max_rel_error(r);
  c.require(worst < tol, label + ": " + std::to_string(r.size()) + " groups, max relative error " +
                             fmt(worst, 3) + " (" + ft::worst(r) + ") < " + fmt(tol, 1));
}

Criterion gradient_suite() {
  Criterion c{"gradient suite"};
  Clock clock;
  group_summary(c, "operators, 64-bit", ft::operator_gradient_suite(2026, 3), 1e-5);
  group_summary(c, "composite linear-gelu-dwconv2d-pool, 64-bit", ft::composite_gradient_check_f64(7), 1e-5);
  group_summary(c, "composite linear-gelu-dwconv2d-pool, 32-bit", ft::composite_gradient_check_f32(7), 1e-3);
  group_summary(c, "tiny FocalNet per parameter group, 64-bit", ft::model_gradient_check_f64(3, 12), 1e-5);
  group_summary(c, "tiny FocalNet per parameter group, 32-bit", ft::model_gradient_check_f32(3, 12), 1e-3);
  c.seconds = clock.seconds();
  c.require(c.seconds < 120, "runtime " + fmt(c.seconds, 3) + " s < 120 s");
  return c;
}

Criterion focal_algebra() {
  Criterion c{"focal modulation algebra"};
  Clock clock;
  const double neutral = ft::neutral_modulator_max_diff(11, 50);
  c.require(neutral == 0.0, "neutral modulator, q = identity: max |y - x| = " + fmt(neutral) + " (exact)");
  const auto sel = ft::one_hot_gate_selector(12, 50);
  c.require(sel.identity_h_max_diff < 1e-5,
            "one-hot gates, h = identity: max |m - Z^l| = " + fmt(sel.identity_h_max_diff) + " < 1e-5");
  c.require(sel.general_h_max_diff < 1e-5,
            "one-hot gates, general h: max |m - h(Z^l)| = " + fmt(sel.general_h_max_diff) + " < 1e-5");
  const auto o = ft::gated_aggregate_oracle(13, 50);
  c.require(o.shapes == 50 && o.max_abs_diff < 1e-5,
            "vectorized vs per-location scalar reference on " + std::to_string(o.shapes) +
                " shapes: max abs diff " + fmt(o.max_abs_diff, 3) + " < 1e-5");
  c.seconds = clock.seconds();
  c.require(c.seconds < 60, "runtime " + fmt(c.seconds, 3) + " s < 60 s");
  return c;
}

Criterion mask_suite() {
  Criterion c{"quantile mask suite"};
  Clock clock;
  std::mt19937_64 rng(21);
  bool all_ones = true;
  for (int t = 0; t < 10; ++t) {
    const auto map = ft::distinct_map(7, 7, rng);
    for (auto mode : {fna::ThresholdMode::kUpsampleThenThreshold, fna::ThresholdMode::kThresholdThenUpsample})
      all_ones = all_ones && fna::threshold_mask(map, 0.0, 513, 431, mode).retained() == 513u * 431u;
  }
  c.require(all_ones, "q = 0 gives the all-ones 513x431 mask (10 maps, both threshold paths)");

  double worst_gap = 0;
  bool within = true;
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{7, 7}, {40, 30}, {513, 431}}) {
    const double N = static_cast<double>(h * w);
    for (double q : {0.5, 0.9, 0.99}) {
      for (int t = 0; t < 3; ++t) {
        const auto map = ft::distinct_map(h, w, rng);
        const double gap = std::abs(fna::threshold_mask(map, q, h, w).retained_fraction() - (1 - q));
        worst_gap = std::max(worst_gap, gap * N);
        within = within && gap <= 1.0 / N;
      }
    }
  }
  c.require(within, "distinct-valued maps (7x7, 40x30, 513x431; q in {0.5, 0.9, 0.99}): worst |fraction - (1-q)| = " +
                        fmt(worst_gap, 3) + "/N <= 1/N");

  bool mono = true;
  const std::vector<double> qs{0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0};
  for (int t = 0; t < 10; ++t) {
    const auto map = ft::distinct_map(7, 7, rng);
    fna::Matrix prev;
    for (double q : qs) {
      const auto m = fna::threshold_mask(map, q, 513, 431).mask;
      if (prev.size())
        for (std::size_t i = 0; i < m.size(); ++i) mono = mono && m.data[i] <= prev.data[i];
      prev = m;
    }
  }
  c.require(mono, "q1 <= q2 implies mask(q2) within mask(q1), 10 maps x 9 orders");

  bool scale = true;
  for (int t = 0; t < 10; ++t) {
    const auto map = ft::distinct_map(7, 7, rng);
    for (float s : {1e-3f, 0.5f, 7.0f, 1e4f}) {
      auto scaled = map;
      for (auto& v : scaled.values.data) v *= s;
      for (double q : {0.5, 0.9, 0.99})
        for (auto mode : {fna::ThresholdMode::kUpsampleThenThreshold, fna::ThresholdMode::kThresholdThenUpsample})
          scale = scale && fna::threshold_mask(scaled, q, 513, 431, mode).mask ==
                               fna::threshold_mask(map, q, 513, 431, mode).mask;
    }
  }
  c.require(scale, "positive rescaling of the map leaves the mask unchanged (4 scales, 3 orders, both paths)");
  c.seconds = clock.seconds();
  c.require(c.seconds < 30, "runtime " + fmt(c.seconds, 3) + " s < 30 s");
  return c;
}

Criterion stft_contract() {
  Criterion c{"STFT contract"};
  Clock clock;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  fna::Waveform w{std::vector<float>(80000), 16000};
  for (auto& s : w.samples) s = u(rng);
  const auto s = fna::stft(w);
  c.require(s.bins() == 513 && s.frames() == 431,
            "5 s at 16 kHz -> " + std::to_string(s.bins()) + "x" + std::to_string(s.frames()) + " (513x431)");

  std::string peaks;
  bool peaks_ok = true;
  for (double hz : {500.0, 1000.0, 2000.0, 4000.0, 6000.0}) {
    fna::Waveform t{std::vector<float>(80000), 16000};
    for (std::size_t i = 0; i < t.samples.size(); ++i)
      t.samples[i] = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * hz * double(i) / 16000));
    const auto st = fna::stft(t);
    const auto expect = static_cast<std::size_t>(std::lround(hz * 1024 / 16000));
    // Frames whose window reaches into the reflect padding are not pure tones.
    const auto half = static_cast<std::size_t>(st.params.win_length / 2);
    for (std::size_t f = 1; f * static_cast<std::size_t>(st.params.hop_length) + half <= t.samples.size(); f += 43) {
      std::size_t best = 0;
      for (std::size_t b = 1; b < st.bins(); ++b)
        if (st.log_mag(b, f) > st.log_mag(best, f)) best = b;
      peaks_ok = peaks_ok && best == expect;
    }
    peaks += " " + fmt(hz, 5) + "->" + std::to_string(expect);
  }
  c.require(peaks_ok, "sine peak at bin round(f*1024/16000) in sampled interior frames:" + peaks);

  double worst = 1e300;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 r(1000 + seed);
    fna::Waveform x{std::vector<float>(80000), 16000};
    for (auto& v : x.samples) v = u(r);
    const auto sx = fna::stft(x);
    const auto y = fna::istft_reconstruct(sx.log_mag, sx.phase, sx.params);
    worst = std::min(worst, fna::snr_db(x.samples, y.samples));
  }
  c.require(worst >= 30, "round trip over 20 seeds: minimum SNR " + fmt(worst, 4) + " dB >= 30 dB");
  c.seconds = clock.seconds();
  c.require(c.seconds < 60, "runtime " + fmt(c.seconds, 3) + " s < 60 s");
  return c;
}

struct Pipeline {
  fs::path data, run1, run2;
  json config;  // run configuration used for run1
  fs::path checkpoint;
  bool trained = false;
};

Criterion desk_end_to_end(Pipeline& p) {
  Criterion c{"desk-scale end-to-end"};
  Clock clock;
  c.note("hardware threads: " + std::to_string(std::thread::hardware_concurrency()) +
         " (criterion assumes a 4-core CPU)");
  call("gen-synth", [&](char** o) { return fna_generate_synthetic(p.data.c_str(), 4, 100, 0, o); });
  const double gen_s = clock.seconds();
  p.config = json::parse(call("default config", [](char** o) { return fna_default_config("desk", o); }));
  p.config["data_root"] = p.data.string();
  p.config["run_dir"] = p.run1.string();
  p.config["split"] = "test";
  Clock train_clock;
  const auto summary = json::parse(call("train", [&](char** o) { return fna_train(p.config.dump().c_str(), o); }));
  const double train_s = train_clock.seconds();
  p.checkpoint = summary.at("checkpoint").get<std::string>();
  p.trained = true;
  c.note("synthetic dataset: 4 classes x 100 clips in " + fmt(gen_s, 3) + " s");

  const auto params = summary.at("parameters").get<std::size_t>();
  const auto model_cfg = p.config.at("model");
  const int input = model_cfg.at("input_size").get<int>();
  c.require(params <= 1000000 && input == 96,
            "preset: " + std::to_string(params) + " parameters (<= 1M), " + std::to_string(input) + "x" +
                std::to_string(input) + " input");
  const double acc = summary.at("best_val_accuracy").get<double>();
  c.require(acc >= 0.95, "best validation accuracy " + fmt(acc) + " >= 0.95 (epoch " +
                             std::to_string(summary.at("best_epoch").get<int>()) + ")");
  c.require(train_s <= 900, "training time " + fmt(train_s, 4) + " s <= 900 s");

  // Tone concentration on test clips of the two pure-tone classes.
  const auto ck = fna::load_checkpoint(p.checkpoint);
  const auto manifest = fna::load_manifest(p.data);
  const auto clips = fna::load_eval_clips(manifest, fna::Split::kTest, ck.preprocess);
  fna::FocalNetClassifier cls(*ck.model, ck.preprocess.input_size, ck.preprocess.channels);
  std::vector<double> conc, base;
  double retained_frac = 0;
  for (auto k : {fna::SynthClass::kTone500, fna::SynthClass::kTone2000}) {
    const double bin = fna::synth_tone_hz(k) * ck.preprocess.stft.n_fft / ck.preprocess.sample_rate;
    int taken = 0;
    for (const auto& clip : clips) {
      if (clip.label != static_cast<int>(k) || taken == 10) continue;
      ++taken;
      fna::ModulationMap map;
      cls.classify(clip.log_mag, &map);
      const auto mask = fna::threshold_mask(map, 0.9, clip.log_mag.rows, clip.log_mag.cols);
      conc.push_back(fna::band_concentration(mask.mask, bin, 3));
      const auto rnd = fna::random_mask(clip.log_mag.rows, clip.log_mag.cols, mask.retained(),
                                        fna::fnv1a64({reinterpret_cast<const std::uint8_t*>(clip.id.data()),
                                                      clip.id.size()}));
      base.push_back(fna::band_concentration(rnd, bin, 3));
      retained_frac += mask.retained_fraction();
    }
  }
  const double mc = median(conc), mb = median(base);
  retained_frac /= static_cast<double>(conc.size());
  c.note(std::to_string(conc.size()) + " tone clips; mean retained fraction at q = 0.9: " + fmt(retained_frac));
  c.note("ceiling for a +-3 bin band (7 of 513 rows) at that fraction: " +
         fmt(std::min(1.0, 7.0 / 513.0 / retained_frac)));
  c.require(mc >= 0.6, "median concentration within +-3 bins: " + fmt(mc) + " >= 0.6");
  c.require(mb > 0 && mc >= 2 * mb,
            "median uniform-random baseline " + fmt(mb) + "; ratio " + (mb > 0 ? fmt(mc / mb) : "n/a") + " >= 2");
  c.seconds = clock.seconds();
  c.note("training " + fmt(train_s, 4) + " s of " + fmt(c.seconds, 4) + " s total");
  return c;
}

Criterion metric_oracles(const Pipeline& p) {
  Criterion c{"metric oracles"};
  Clock clock;
  const auto ck = fna::load_checkpoint(p.checkpoint);
  const auto manifest = fna::load_manifest(p.data);
  const auto clips = fna::load_eval_clips(manifest, fna::Split::kTest, ck.preprocess);
  std::vector<fna::EvalClip> subset(clips.begin(), clips.begin() + std::min<std::size_t>(clips.size(), 40));
  fna::FocalNetClassifier cls(*ck.model, ck.preprocess.input_size, ck.preprocess.channels);
  const double f0 = fna::fid_i(cls, subset, 0.0);
  c.require(f0 == 1.0, "trained model, " + std::to_string(subset.size()) + " test clips: FID-I(q=0) = " +
                           fmt(f0, 17) + " (exactly 1)");
  double worst = 0;
  for (const auto& clip : subset) {
    const auto r = fna::evaluate_with_mask(cls, clip, fna::Matrix(clip.log_mag.rows, clip.log_mag.cols, 0.0f));
    worst = std::max(worst, std::abs(r.faithfulness()));
  }
  c.require(worst == 0.0, "all-zero mask: max |FA| = " + fmt(worst, 17) + " (exactly 0)");
  ft::RowSumClassifier stub;
  const double three = fna::fid_i(stub, ft::three_clip_case(), 0.75);
  c.require(std::abs(three - 2.0 / 3.0) < 1e-15, "stub classifier, hand-enumerated 3 clips at q = 0.75: FID-I = " +
                                                     fmt(three, 17) + " (2/3)");
  c.seconds = clock.seconds();
  c.require(c.seconds < 30, "runtime " + fmt(c.seconds, 3) + " s < 30 s");
  return c;
}

Criterion trend(const Pipeline& p) {
  Criterion c{"quantile-order trend"};
  Clock clock;
  auto cfg = p.config;
  cfg["q_grid"] = "0.1:0.99:0.1";
  call("sweep", [&](char** o) { return fna_sweep(cfg.dump().c_str(), o); });
  const auto plot = json::parse(slurp(p.run1 / "sweep.json"));
  const auto qs = plot.at("q").get<std::vector<double>>();
  const auto fid = plot.at("fid_i").get<std::vector<double>>();
  const auto fa = plot.at("fa").get<std::vector<double>>();
  std::ostringstream series;
  for (std::size_t i = 0; i < qs.size(); ++i)
    series << (i ? "; " : "") << fmt(qs[i], 2) << ": " << fmt(fid[i], 3) << "/" << fmt(fa[i], 3);
  c.note("q: FID-I/FA  " + series.str());

  const auto ck = fna::load_checkpoint(p.checkpoint);
  const auto manifest = fna::load_manifest(p.data);
  const auto clips = fna::load_eval_clips(manifest, fna::Split::kTest, ck.preprocess);
  fna::FocalNetClassifier cls(*ck.model, ck.preprocess.input_size, ck.preprocess.channels);
  const double f0 = fna::fid_i(cls, clips, 0.0);
  c.require(f0 == 1.0, "FID-I(q=0) = " + fmt(f0, 17) + " on " + std::to_string(clips.size()) + " test clips");
  const double max_fid = *std::max_element(fid.begin(), fid.end());
  c.require(!fid.empty() && fid.front() == max_fid,
            "FID-I maximal at the low-q end: FID-I(" + fmt(qs.front(), 2) + ") = " + fmt(fid.front()) +
                ", max " + fmt(max_fid));
  const double rho = fna::spearman(qs, fa);
  c.require(rho > 0, "Spearman(q, FA) = " + fmt(rho) + " > 0");
  c.seconds = clock.seconds();
  c.require(c.seconds < 600, "runtime " + fmt(c.seconds, 4) + " s < 600 s");
  return c;
}

Criterion reproducibility(const Pipeline& p) {
  Criterion c{"reproducibility from stamps"};
  Clock clock;
  for (const char* cmd : {"train", "sweep"}) {
    auto stamp = json::parse(slurp(p.run1 / "stamps" / (std::string(cmd) + ".json")));
    c.require(stamp.at("config").at("train").at("serial").get<bool>(), std::string(cmd) + " stamp records serial mode");
    stamp["config"]["run_dir"] = p.run2.string();
    const std::string text = stamp.dump();
    if (std::string(cmd) == "train")
      call("train rerun", [&](char** o) { return fna_train(text.c_str(), o); });
    else
      call("sweep rerun", [&](char** o) { return fna_sweep(text.c_str(), o); });
  }
  for (const char* f : {"checkpoint/best.fnackpt", "checkpoint/last.fnackpt", "metrics.csv", "train_log.jsonl"}) {
    const auto a = slurp(p.run1 / f), b = slurp(p.run2 / f);
    c.require(!a.empty() && a == b, std::string(f) + ": " + std::to_string(a.size()) + " bytes, " +
                                        (a == b ? "identical" : "differs"));
  }
  c.seconds = clock.seconds();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fna acceptance runner"};
  fs::path work = fs::temp_directory_path() / "fna_acceptance";
  app.add_option("--work", work, "Scratch directory (wiped first)");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);
  Pipeline p{work / "data", work / "run1", work / "run2", {}, {}, false};

  std::vector<Criterion> results;
  auto run = [&](const std::string& name, const std::function<Criterion()>& f) {
    Criterion c;
    try {
      c = f();
    } catch (const std::exception& e) {
      c.name = name;
      c.require(false, std::string("aborted: ") + e.what());
    }
    print(c);
    results.push_back(c);
  };
  run("gradient suite", gradient_suite);
  run("focal modulation algebra", focal_algebra);
  run("quantile mask suite", mask_suite);
  run("STFT contract", stft_contract);
  run("desk-scale end-to-end", [&] { return desk_end_to_end(p); });
  auto needs_model = [&](const std::function<Criterion()>& f) {
    return [&p, f] {
      if (!p.trained) throw std::runtime_error("no trained desk model");
      return f();
    };
  };
  run("metric oracles", needs_model([&] { return metric_oracles(p); }));
  run("quantile-order trend", needs_model([&] { return trend(p); }));
  run("reproducibility from stamps", needs_model([&] { return reproducibility(p); }));

  int failed = 0;
  std::cout << "\nsummary\n";
  for (const auto& c : results) {
    std::cout << "  " << (c.pass ? "PASS " : "FAIL ") << c.name << "\n";
    failed += !c.pass;
  }
  std::cout << results.size() - failed << "/" << results.size() << " criteria passed\n";
  return failed;
}
