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
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fna/checkpoint.h"
#include "fna/dataset.h"
#include "fna/error.h"
#include "fna/ops.h"
#include "fna/serialize.h"
#include "fna/training.h"
#include "support/oracles.h"

using fna::Checkpoint;
using fna::FocalNet;
using fna::FocalNetConfig;
using fna::TrainConfig;
using TF = fna::Tensor<float>;
using TD = fna::Tensor<double>;
namespace ops = fna::ops;
namespace ft = fna::testing;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / "fna_test_training" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Class k brightens quadrant k of a noisy 32x32 input.
fna::TrainSet quadrant_set(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 0.5f);
  fna::TrainSet s;
  for (std::size_t i = 0; i < 4 * per_class; ++i) {
    const int k = static_cast<int>(i % 4);
    std::vector<float> v(3 * 32 * 32);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const bool in = (y / 16) == static_cast<std::size_t>(k / 2) && (x / 16) == static_cast<std::size_t>(k % 2);
          v[(c * 32 + y) * 32 + x] = nd(rng) + (in ? 1.5f : -0.5f);
        }
    s.inputs.push_back(TF::from({3, 32, 32}, v));
    s.labels.push_back(k);
    s.ids.push_back("q" + std::to_string(seed) + "-" + std::to_string(i));
  }
  return s;
}

TrainConfig small_config() {
  TrainConfig c = TrainConfig::desk();
  c.batch_size = 4;
  c.epochs = 3;
  c.step_size = 5;
  c.lr_min = 1e-4;
  c.lr_max = 3e-3;
  c.seed = 17;
  return c;
}

fna::PreprocessConfig tiny_preprocess() {
  fna::PreprocessConfig p;
  p.input_size = 32;
  return p;
}

std::vector<float> flat_params(const FocalNet<float>& m) {
  std::vector<float> out;
  m.visit_parameters(FocalNet<float>::ConstParamVisitor(
      [&](const std::string&, const TF& t) { out.insert(out.end(), t.data().begin(), t.data().end()); }));
  return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("train config presets and validation") {
  const auto p = TrainConfig::full();
  CHECK(p.batch_size == 16);
  CHECK(p.epochs == 100);
  CHECK(p.lr_min == 1e-8);
  CHECK(p.lr_max == 2e-4);
  CHECK(p.step_size == 65000);
  CHECK(p.weight_decay == 2e-6);
  CHECK(p.grad_clip_norm == 5);
  CHECK(p.am_margin == 0.2);
  CHECK(p.am_scale == 30);
  CHECK(p.augment_prob == 0.75);
  CHECK(p.adam_beta1 == 0.9);
  CHECK(p.adam_beta2 == 0.999);
  CHECK(p.adam_eps == 1e-8);
  CHECK_NOTHROW(p.validate());
  auto bad = p;
  bad.lr_min = bad.lr_max;
  CHECK_THROWS_AS(bad.validate(), fna::ConfigError);
  bad = p;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), fna::ConfigError);
  bad = p;
  bad.am_scale = 0;
  CHECK_THROWS_AS(bad.validate(), fna::ConfigError);
}

TEST_CASE("am-softmax loss") {
  std::mt19937_64 rng(1);
  auto f = ft::random_tensor<double>({5, 6}, rng), w = ft::random_tensor<double>({3, 6}, rng);
  const std::vector<int> labels{0, 2, 1, 1, 0};

  // margin 0, scale 1: plain cross-entropy on cosines.
  auto cos = ops::linear(ops::l2_normalize_rows(f), ops::l2_normalize_rows(w), TD());
  CHECK(fna::am_softmax_loss(f, w, labels, 0.0, 1.0).item() ==
        doctest::Approx(ops::cross_entropy(cos, labels).item()).epsilon(1e-14));

  auto aligned = fna::am_softmax_loss(TD::from({1, 2}, {2, 0}), TD::from({2, 2}, {1, 0, 0, 1}), {0}, 0.2, 30.0);
  CHECK(aligned.item() == doctest::Approx(std::log1p(std::exp(-24.0))).epsilon(1e-9));
  CHECK(aligned.item() == doctest::Approx(3.78e-11).epsilon(1e-3));

  double prev = -1;
  for (double m : {0.0, 0.1, 0.2, 0.35, 0.5, 1.0}) {
    const double l = fna::am_softmax_loss(f, w, labels, m, 30.0).item();
    CHECK(l >= prev);
    prev = l;
  }

  auto res = ft::finite_difference_check(
      [=]() { return fna::am_softmax_loss(f, w, labels, 0.2, 30.0); }, {{"features", f}, {"weights", w}});
  for (const auto& g : res) CHECK(g.rel_error < 1e-5);

  auto z = TF::from({2, 2}, {1, 1, 0, 0});
  const std::vector<std::string> ids{"a.wav", "b.wav"};
  try {
    fna::am_softmax_loss(z, TF::from({2, 2}, {1, 0, 0, 1}), {0, 1}, 0.2, 30.0, &ids);
    FAIL("zero-norm row accepted");
  } catch (const fna::NumericalError& e) {
    CHECK(std::string(e.what()).find("b.wav") != std::string::npos);
  }
}

TEST_CASE("cyclic learning rate") {
  CHECK(fna::cyclic_lr(0, 1e-8, 2e-4, 65000) == 1e-8);
  CHECK(fna::cyclic_lr(65000, 1e-8, 2e-4, 65000) == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(fna::cyclic_lr(32500, 1e-8, 2e-4, 65000) == doctest::Approx((1e-8 + 2e-4) / 2).epsilon(1e-14));
  CHECK(fna::cyclic_lr(130000, 1e-8, 2e-4, 65000) == 1e-8);
  for (std::int64_t s = 0; s < 400; s += 7) {
    const double v = fna::cyclic_lr(s, 0.1, 0.5, 30);
    CHECK(v >= 0.1);
    CHECK(v <= 0.5);
    CHECK(fna::cyclic_lr(s + 60, 0.1, 0.5, 30) == v);
    CHECK(fna::cyclic_lr(30 + (s % 30), 0.1, 0.5, 30) ==
          doctest::Approx(fna::cyclic_lr(30 - (s % 30), 0.1, 0.5, 30)).epsilon(1e-14));
  }
}

TEST_CASE("optimizer step") {
  std::vector<float> p{0.5f, -1.0f, 2.0f}, g{0, 0, 0};
  std::vector<fna::ParamRef> refs{{"w", p, g}};
  fna::AdamState st;
  st.init(refs);
  fna::optimizer_step(refs, st, 1e-2, 0.0, 5.0);
  CHECK(p == std::vector<float>{0.5f, -1.0f, 2.0f});

  std::vector<float> a{6, 0}, b{0, 8};
  std::vector<float> pa(2), pb(2);
  std::vector<fna::ParamRef> two{{"a", pa, a}, {"b", pb, b}};
  CHECK(fna::clip_grad_norm(two, 5.0) == doctest::Approx(10.0));
  CHECK(a[0] == doctest::Approx(3.0));
  CHECK(b[1] == doctest::Approx(4.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd(0.0f, 4.0f);
  for (int t = 0; t < 20; ++t) {
    std::vector<float> g1(17), g2(5), v1(17), v2(5);
    for (auto& x : g1) x = nd(rng);
    for (auto& x : g2) x = nd(rng);
    std::vector<fna::ParamRef> r{{"g1", v1, g1}, {"g2", v2, g2}};
    const double clip = 0.5 + t;
    fna::clip_grad_norm(r, clip);
    double n = 0;
    for (float x : g1) n += double(x) * x;
    for (float x : g2) n += double(x) * x;
    CHECK(std::sqrt(n) <= clip + 1e-6);
  }

  std::vector<float> q{0.0f}, qg{std::nanf("")};
  std::vector<fna::ParamRef> bad{{"stage.0.w", q, qg}};
  fna::AdamState bs;
  bs.init(bad);
  try {
    fna::optimizer_step(bad, bs, 1e-3, 0.0, 5.0);
    FAIL("NaN accepted");
  } catch (const fna::NumericalError& e) {
    CHECK(std::string(e.what()).find("stage.0.w") != std::string::npos);
  }
}

TEST_CASE("adam converges on a quadratic") {
  std::vector<float> x{0.0f}, g{0.0f};
  std::vector<fna::ParamRef> refs{{"x", x, g}};
  fna::AdamState st;
  st.init(refs);
  const double target = 1.0;
  for (int i = 0; i < 200; ++i) {
    g[0] = static_cast<float>(2 * (x[0] - target));
    fna::optimizer_step(refs, st, 1e-2, 0.0, 5.0);
  }
  CHECK(std::abs(x[0] - target) < 2e-2);
}

TEST_CASE("fixed batch loss decreases on the tiny preset") {
  FocalNet<float> model(FocalNetConfig::tiny(), 4);
  model.set_requires_grad(true);
  // One batch of the full-preset batch size drawn from the synthetic tone classes.
  fna::TrainSet batch;
  fna::SynthConfig sc;
  for (int i = 0; i < 16; ++i) {
    const auto w = fna::synthesize_clip(static_cast<fna::SynthClass>(i % 4), sc, 1000 + i);
    batch.inputs.push_back(fna::to_model_input(fna::stft(w), 32, 3));
    batch.labels.push_back(i % 4);
  }
  auto refs = fna::parameter_refs(model);
  fna::AdamState st;
  st.init(refs);
  std::vector<double> losses;
  for (int i = 0; i < 11; ++i) {
    model.zero_grad();
    std::vector<TF> feats;
    for (const auto& x : batch.inputs) feats.push_back(model.forward(x).features);
    auto loss = fna::am_softmax_loss(ops::stack(feats), model.head_weight(), batch.labels, 0.2, 30.0);
    losses.push_back(loss.item());
    fna::backward(loss);
    refs = fna::parameter_refs(model);
    fna::optimizer_step(refs, st, 1e-3, 0.0, 5.0);
  }
  std::ostringstream trail;
  for (double l : losses) trail << l << ' ';
  MESSAGE("fixed-batch losses: " << trail.str());
  for (std::size_t i = 1; i < losses.size(); ++i) {
    INFO("step " << i << ": " << losses[i - 1] << " -> " << losses[i]);
    CHECK(losses[i] < losses[i - 1]);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  Checkpoint c;
  c.model_config = FocalNetConfig::tiny();
  c.train_config = small_config();
  c.preprocess = tiny_preprocess();
  c.epoch = 2;
  c.step = 31;
  c.history = {{1, 15, 1.5, 0.25}, {2, 31, 1.0, 0.5}};
  c.best_epoch = 2;
  c.best_val_accuracy = 0.5;
  c.model.emplace(c.model_config, 9);
  auto refs = fna::parameter_refs(*c.model);
  c.adam.init(refs);
  c.adam.step = 31;
  std::mt19937_64 rng(2);
  std::normal_distribution<float> nd;
  for (auto& m : c.adam.m)
    for (auto& v : m) v = nd(rng);
  for (auto& m : c.adam.v)
    for (auto& v : m) v = std::abs(nd(rng));

  const auto dir = fresh_dir("ckpt");
  const auto path = dir / "c.fnackpt";
  fna::save_checkpoint(c, path);
  const auto r = fna::load_checkpoint(path);
  REQUIRE(r.model.has_value());
  CHECK(flat_params(*r.model) == flat_params(*c.model));
  CHECK(r.adam.m == c.adam.m);
  CHECK(r.adam.v == c.adam.v);
  CHECK(r.adam.step == 31);
  CHECK(r.model_config == c.model_config);
  CHECK(r.train_config == c.train_config);
  CHECK(r.preprocess == c.preprocess);
  CHECK(r.history.size() == 2);
  CHECK(r.history[1].val_accuracy == 0.5);
  CHECK(r.best_epoch == 2);
  CHECK(fna::model_id(*r.model) == fna::model_id(*c.model));

  fna::NoGradGuard no_grad;
  auto x = ft::random_tensor<float>({3, 32, 32}, rng);
  auto a = c.model->forward(x, true), b = r.model->forward(x, true);
  CHECK(std::equal(a.logits.data().begin(), a.logits.data().end(), b.logits.data().begin()));
  CHECK(a.cache->modulator == b.cache->modulator);

  // Same content encodes to the same bytes.
  CHECK(fna::encode_checkpoint(r) == read_bytes(path));

  auto bytes = read_bytes(path);
  for (std::size_t at : {std::size_t{20}, bytes.size() / 2, bytes.size() - 3}) {
    auto bad = bytes;
    bad[at] ^= 0x40;
    CHECK_THROWS_AS(fna::decode_checkpoint(bad), fna::ChecksumError);
  }
  {
    auto bad = bytes;
    bad[8] = 2;  // version field
    const auto h = fna::fnv1a64(std::span<const std::uint8_t>(bad).first(bad.size() - 8));
    for (int i = 0; i < 8; ++i) bad[bad.size() - 8 + i] = static_cast<std::uint8_t>(h >> (8 * i));
    CHECK_THROWS_AS(fna::decode_checkpoint(bad), fna::VersionError);
  }
  {
    auto bad = bytes;
    bad.resize(bytes.size() / 3);
    CHECK_THROWS(fna::decode_checkpoint(bad));
  }
  {
    std::ofstream out(dir / "corrupt.fnackpt", std::ios::binary);
    auto bad = bytes;
    bad[bytes.size() / 2] ^= 1;
    out.write(reinterpret_cast<const char*>(bad.data()), static_cast<std::streamsize>(bad.size()));
  }
  Checkpoint target = r;
  try {
    target = fna::load_checkpoint(dir / "corrupt.fnackpt");
    FAIL("corrupt checkpoint loaded");
  } catch (const fna::ChecksumError&) {
  }
  CHECK(flat_params(*target.model) == flat_params(*c.model));

  auto changed = *c.model;
  changed.visit_parameters(FocalNet<float>::ParamVisitor([](const std::string&, TF& t) {
    t.mutable_data()[0] += 1.0f;
  }));
  CHECK(fna::model_id(changed) != fna::model_id(*c.model));
  CHECK(fna::model_id(*c.model).size() == 16);
}

TEST_CASE("fit: logging, checkpoints and resume") {
  const auto cfg = small_config();
  const auto train = quadrant_set(4, 1), val = quadrant_set(2, 2);
  const auto dir = fresh_dir("fit_full");
  fna::FitOptions full_opts;
  full_opts.checkpoint_dir = dir / "checkpoint";
  full_opts.log_path = dir / "log.jsonl";
  const auto full = fna::fit(FocalNetConfig::tiny(), cfg, tiny_preprocess(), train, val, full_opts);
  REQUIRE(full.steps.size() == 12);
  for (const auto& s : full.steps) CHECK(s.lr == fna::cyclic_lr(s.step, cfg.lr_min, cfg.lr_max, cfg.step_size));
  CHECK(fs::exists(dir / "checkpoint" / "last.fnackpt"));
  CHECK(fs::exists(dir / "checkpoint" / "best.fnackpt"));
  CHECK(full.last.epoch == 3);
  CHECK(full.last.history.size() == 3);

  std::ifstream log(dir / "log.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(log, line)) {
    auto j = fna::Json::parse(line);
    REQUIRE(n < full.steps.size());
    CHECK(j.at("step").get<std::int64_t>() == full.steps[n].step);
    CHECK(j.at("lr").get<double>() == full.steps[n].lr);
    CHECK(j.at("loss").get<double>() == full.steps[n].loss);
    CHECK(j.contains("grad_norm"));
    ++n;
  }
  CHECK(n == full.steps.size());

  // Deterministic rerun.
  const auto again = fna::fit(FocalNetConfig::tiny(), cfg, tiny_preprocess(), train, val, {});
  for (std::size_t i = 0; i < full.steps.size(); ++i) CHECK(again.steps[i].loss == full.steps[i].loss);

  // Stop after one epoch, reload from disk, resume.
  const auto pdir = fresh_dir("fit_partial");
  fna::FitOptions part_opts;
  part_opts.checkpoint_dir = pdir;
  part_opts.stop_after_epoch = 1;
  const auto part = fna::fit(FocalNetConfig::tiny(), cfg, tiny_preprocess(), train, val, part_opts);
  CHECK(part.steps.size() == 4);
  const auto reloaded = fna::load_checkpoint(pdir / "last.fnackpt");
  fna::FitOptions resume_opts;
  resume_opts.checkpoint_dir = pdir;
  resume_opts.resume = &reloaded;
  const auto resumed = fna::fit(FocalNetConfig::tiny(), cfg, tiny_preprocess(), train, val, resume_opts);
  REQUIRE(resumed.steps.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(resumed.steps[i].step == full.steps[4 + i].step);
    CHECK(resumed.steps[i].loss == full.steps[4 + i].loss);
  }
  CHECK(flat_params(*resumed.last.model) == flat_params(*full.last.model));
  CHECK(resumed.best.best_epoch == full.best.best_epoch);

  // Producer-consumer loading gives the same batches.
  auto par = cfg;
  par.serial = false;
  const auto threaded = fna::fit(FocalNetConfig::tiny(), par, tiny_preprocess(), train, val, {});
  for (std::size_t i = 0; i < full.steps.size(); ++i) CHECK(threaded.steps[i].loss == full.steps[i].loss);
}

TEST_CASE("fit: divergence saves the last finite state") {
  auto cfg = small_config();
  cfg.lr_min = 1e30;
  cfg.lr_max = 1e31;
  cfg.epochs = 2;
  const auto dir = fresh_dir("diverge");
  fna::FitOptions opts;
  opts.checkpoint_dir = dir;
  CHECK_THROWS_AS(fna::fit(FocalNetConfig::tiny(), cfg, tiny_preprocess(), quadrant_set(2, 3),
                           quadrant_set(1, 4), opts),
                  fna::NumericalError);
  CHECK(fs::exists(dir / "last_finite.fnackpt"));
  CHECK_NOTHROW(fna::load_checkpoint(dir / "last_finite.fnackpt"));
}

TEST_CASE("augmentation seeds") {
  const auto a = fna::augment_seed(1, 1, "x.wav");
  CHECK(a == fna::augment_seed(1, 1, "x.wav"));
  CHECK(a != fna::augment_seed(1, 2, "x.wav"));
  CHECK(a != fna::augment_seed(2, 1, "x.wav"));
  CHECK(a != fna::augment_seed(1, 1, "y.wav"));
}
