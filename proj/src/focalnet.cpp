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

#include "fna/focalnet.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fna/error.h"
#include "fna/ops.h"

namespace fna {

FocalNetConfig FocalNetConfig::base() { return FocalNetConfig{}; }

FocalNetConfig FocalNetConfig::tiny() {
  FocalNetConfig c;
  c.stage_depths = {1, 1};
  c.stage_dims = {8, 16};
  c.input_size = 32;
  c.num_classes = 4;
  return c;
}

FocalNetConfig FocalNetConfig::desk() {
  FocalNetConfig c;
  c.stage_depths = {2, 2};
  c.stage_dims = {24, 48};
  c.input_size = 96;
  c.num_classes = 4;
  return c;
}

void FocalNetConfig::set_base_dim(int dim) {
  stage_dims.resize(stage_depths.size());
  for (std::size_t i = 0; i < stage_dims.size(); ++i) stage_dims[i] = dim << i;
}

std::vector<int> FocalNetConfig::kernel_sizes() const {
  if (!focal_kernels.empty()) return focal_kernels;
  std::vector<int> k(static_cast<std::size_t>(std::max(focal_levels, 0)));
  for (std::size_t l = 0; l < k.size(); ++l)
    k[l] = focal_window + 2 * static_cast<int>(l);
  return k;
}

void FocalNetConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("FocalNetConfig: " + m); };
  if (stage_depths.empty()) fail("no stages");
  if (stage_depths.size() != stage_dims.size())
    fail("stage_depths and stage_dims differ in length");
  for (int d : stage_depths)
    if (d < 1) fail("stage depth must be >= 1");
  for (int d : stage_dims)
    if (d < 1) fail("stage dim must be >= 1");
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (input_size < 1) fail("input_size must be >= 1");
  if (patch_size < 1 || downsample_patch < 1) fail("patch sizes must be >= 1");
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (focal_levels < 1) fail("focal_levels must be >= 1");
  const auto k = kernel_sizes();
  if (static_cast<int>(k.size()) != focal_levels)
    fail("focal_kernels has " + std::to_string(k.size()) + " entries for " +
         std::to_string(focal_levels) + " levels");
  for (int v : k)
    if (v < 1 || v % 2 == 0) fail("focal kernel sizes must be odd, got " + std::to_string(v));
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (!(layernorm_eps > 0)) fail("layernorm_eps must be positive");
  if (!(head_scale > 0)) fail("head_scale must be positive");
}

std::vector<std::size_t> FocalNetConfig::stage_resolutions(std::size_t input) const {
  std::vector<std::size_t> r;
  std::size_t side = (input + patch_size - 1) / patch_size;
  for (std::size_t s = 0; s < stage_depths.size(); ++s) {
    r.push_back(side);
    side = (side + downsample_patch - 1) / downsample_patch;
  }
  return r;
}

bool operator==(const FocalNetConfig& a, const FocalNetConfig& b) {
  return a.stage_depths == b.stage_depths && a.stage_dims == b.stage_dims &&
         a.in_channels == b.in_channels && a.input_size == b.input_size &&
         a.patch_size == b.patch_size && a.downsample_patch == b.downsample_patch &&
         a.num_classes == b.num_classes && a.focal_levels == b.focal_levels &&
         a.focal_window == b.focal_window && a.focal_kernels == b.focal_kernels &&
         a.mlp_ratio == b.mlp_ratio && a.layernorm_eps == b.layernorm_eps &&
         a.head_scale == b.head_scale;
}

template <class T>
std::vector<Tensor<T>> hierarchical_contextualize(
    const Tensor<T>& x, const FocalModulationParams<T>& p) {
  if (x.rank() != 3 || x.dim(2) != p.dim()) {
    throw DimensionError("hierarchical_contextualize: input " +
                         shape_string(x.shape()) + " for dim " +
                         std::to_string(p.dim()));
  }
  const std::size_t H = x.dim(0), W = x.dim(1);
  std::vector<Tensor<T>> contexts;
  contexts.reserve(p.levels() + 1);
  Tensor<T> z = ops::hwc_to_chw(ops::linear(x, p.z_weight, p.z_bias));
  for (const auto& k : p.kernels) {
    z = ops::gelu(ops::dwconv2d(z, k));
    contexts.push_back(ops::chw_to_hwc(z));
  }
  contexts.push_back(ops::tile_tokens(ops::global_avg_pool(z), H, W));
  return contexts;
}

template <class T>
Tensor<T> gated_aggregate(const Tensor<T>& x,
                          const std::vector<Tensor<T>>& contexts,
                          const FocalModulationParams<T>& p) {
  const std::size_t levels = p.gate_weight.dim(0);
  if (contexts.size() != levels || levels != p.levels() + 1) {
    throw ConfigError("gated_aggregate: " + std::to_string(contexts.size()) +
                      " contexts, " + std::to_string(levels) + " gates, " +
                      std::to_string(p.levels()) + " focal levels");
  }
  Tensor<T> gates = ops::linear(x, p.gate_weight, p.gate_bias);
  Tensor<T> acc = ops::mul_gate(contexts[0], ops::slice_last(gates, 0, 1));
  for (std::size_t l = 1; l < levels; ++l)
    acc = ops::add(acc, ops::mul_gate(contexts[l], ops::slice_last(gates, l, 1)));
  return ops::linear(acc, p.h_weight, p.h_bias);
}

template <class T>
FocalModulationOutput<T> focal_modulation(const Tensor<T>& x,
                                          const FocalModulationParams<T>& p) {
  auto contexts = hierarchical_contextualize(x, p);
  Tensor<T> modulator = gated_aggregate(x, contexts, p);
  Tensor<T> q = ops::linear(x, p.q_weight, p.q_bias);
  return {ops::mul(q, modulator), modulator};
}

template <class T>
Tensor<T> focal_block(const Tensor<T>& x, const FocalBlockParams<T>& p, T eps,
                      Tensor<T>* modulator) {
  auto fm = focal_modulation(ops::layernorm(x, p.norm1_gamma, p.norm1_beta, eps),
                             p.modulation);
  if (modulator) *modulator = fm.modulator;
  Tensor<T> x1 = ops::add(x, fm.y);
  Tensor<T> h = ops::layernorm(x1, p.norm2_gamma, p.norm2_beta, eps);
  h = ops::gelu(ops::linear(h, p.fc1_weight, p.fc1_bias));
  return ops::add(x1, ops::linear(h, p.fc2_weight, p.fc2_bias));
}

template <class T>
Tensor<T> patch_embed(const Tensor<T>& x, const PatchEmbedParams<T>& p) {
  return ops::linear(ops::patchify(x, p.patch), p.weight, p.bias);
}

template <class T>
FocalNet<T>::FocalNet(FocalNetConfig config, Uninitialized) : config_(std::move(config)) {
  config_.validate();
  allocate();
}

template <class T>
FocalNet<T>::FocalNet(FocalNetConfig config, std::uint64_t seed)
    : FocalNet(std::move(config), Uninitialized{}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto trunc_normal = [&]() {
    for (;;) {
      const double z = normal(rng);
      if (std::abs(z) <= 2.0) return 0.02 * z;
    }
  };
  visit_parameters(ParamVisitor([&](const std::string& path, Tensor<T>& t) {
    auto d = t.mutable_data();
    auto ends_with = [&](const char* s) {
      const std::string suffix(s);
      return path.size() >= suffix.size() &&
             path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (path.find(".kernel.") != std::string::npos) {
      const double bound = 1.0 / static_cast<double>(t.dim(1));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : d) v = static_cast<T>(u(rng));
    } else if (ends_with(".gamma")) {
      for (auto& v : d) v = T(1);
    } else if (ends_with(".weight")) {
      for (auto& v : d) v = static_cast<T>(trunc_normal());
    } else {
      for (auto& v : d) v = T(0);
    }
  }));
}

template <class T>
FocalNet<T>::FocalNet(const FocalNet& other) : FocalNet(other.config_, Uninitialized{}) {
  copy_values_from(other);
}

template <class T>
FocalNet<T>& FocalNet<T>::operator=(const FocalNet& other) {
  if (this != &other) {
    FocalNet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <class T>
void FocalNet<T>::copy_values_from(const FocalNet& other) {
  std::vector<const Tensor<T>*> src;
  other.visit_parameters(ConstParamVisitor(
      [&](const std::string&, const Tensor<T>& t) { src.push_back(&t); }));
  std::size_t i = 0;
  visit_parameters(ParamVisitor([&](const std::string&, Tensor<T>& t) {
    auto s = src[i++];
    std::copy(s->data().begin(), s->data().end(), t.mutable_data().begin());
    t.set_requires_grad(s->requires_grad());
  }));
}

template <class T>
void FocalNet<T>::allocate() {
  auto param = [](Shape s) { return Tensor<T>::zeros(std::move(s), true); };
  const auto kernels = config_.kernel_sizes();
  const std::size_t levels = kernels.size();

  auto make_embed = [&](std::size_t patch, std::size_t in, std::size_t out) {
    PatchEmbedParams<T> e;
    e.patch = patch;
    e.weight = param({out, patch * patch * in});
    e.bias = param({out});
    return e;
  };

  stem_ = make_embed(config_.patch_size, config_.in_channels, config_.stage_dims[0]);
  stages_.clear();
  downsamples_.clear();
  for (std::size_t s = 0; s < config_.stage_depths.size(); ++s) {
    const std::size_t C = config_.stage_dims[s];
    const std::size_t hidden = C * config_.mlp_ratio;
    std::vector<FocalBlockParams<T>> blocks;
    for (int b = 0; b < config_.stage_depths[s]; ++b) {
      FocalBlockParams<T> p;
      p.norm1_gamma = param({C});
      p.norm1_beta = param({C});
      auto& m = p.modulation;
      m.q_weight = param({C, C});
      m.q_bias = param({C});
      m.z_weight = param({C, C});
      m.z_bias = param({C});
      m.gate_weight = param({levels + 1, C});
      m.gate_bias = param({levels + 1});
      m.h_weight = param({C, C});
      m.h_bias = param({C});
      for (int k : kernels)
        m.kernels.push_back(param({C, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}));
      p.norm2_gamma = param({C});
      p.norm2_beta = param({C});
      p.fc1_weight = param({hidden, C});
      p.fc1_bias = param({hidden});
      p.fc2_weight = param({C, hidden});
      p.fc2_bias = param({C});
      blocks.push_back(std::move(p));
    }
    stages_.push_back(std::move(blocks));
    if (s + 1 < config_.stage_depths.size()) {
      downsamples_.push_back(
          make_embed(config_.downsample_patch, C, config_.stage_dims[s + 1]));
    }
  }
  const std::size_t D = config_.stage_dims.back();
  norm_gamma_ = param({D});
  norm_beta_ = param({D});
  head_weight_ = param({static_cast<std::size_t>(config_.num_classes), D});
}

template <class T>
void FocalNet<T>::visit_parameters(const ParamVisitor& f) {
  f("stem.weight", stem_.weight);
  f("stem.bias", stem_.bias);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      auto& p = stages_[s][b];
      const std::string pre = "stages." + std::to_string(s) + ".blocks." + std::to_string(b) + ".";
      f(pre + "norm1.gamma", p.norm1_gamma);
      f(pre + "norm1.beta", p.norm1_beta);
      auto& m = p.modulation;
      f(pre + "modulation.q.weight", m.q_weight);
      f(pre + "modulation.q.bias", m.q_bias);
      f(pre + "modulation.f_z.weight", m.z_weight);
      f(pre + "modulation.f_z.bias", m.z_bias);
      f(pre + "modulation.f_g.weight", m.gate_weight);
      f(pre + "modulation.f_g.bias", m.gate_bias);
      f(pre + "modulation.h.weight", m.h_weight);
      f(pre + "modulation.h.bias", m.h_bias);
      for (std::size_t l = 0; l < m.kernels.size(); ++l)
        f(pre + "modulation.kernel." + std::to_string(l), m.kernels[l]);
      f(pre + "norm2.gamma", p.norm2_gamma);
      f(pre + "norm2.beta", p.norm2_beta);
      f(pre + "mlp.fc1.weight", p.fc1_weight);
      f(pre + "mlp.fc1.bias", p.fc1_bias);
      f(pre + "mlp.fc2.weight", p.fc2_weight);
      f(pre + "mlp.fc2.bias", p.fc2_bias);
    }
    if (s < downsamples_.size()) {
      const std::string pre = "stages." + std::to_string(s) + ".downsample.";
      f(pre + "weight", downsamples_[s].weight);
      f(pre + "bias", downsamples_[s].bias);
    }
  }
  f("norm.gamma", norm_gamma_);
  f("norm.beta", norm_beta_);
  f("head.weight", head_weight_);
}

template <class T>
void FocalNet<T>::visit_parameters(const ConstParamVisitor& f) const {
  const_cast<FocalNet*>(this)->visit_parameters(
      ParamVisitor([&](const std::string& path, Tensor<T>& t) { f(path, t); }));
}

template <class T>
std::size_t FocalNet<T>::parameter_count() const {
  std::size_t n = 0;
  visit_parameters(ConstParamVisitor(
      [&](const std::string&, const Tensor<T>& t) { n += t.numel(); }));
  return n;
}

template <class T>
void FocalNet<T>::set_requires_grad(bool on) {
  visit_parameters(ParamVisitor(
      [&](const std::string&, Tensor<T>& t) { t.set_requires_grad(on); }));
}

template <class T>
void FocalNet<T>::zero_grad() {
  visit_parameters(
      ParamVisitor([](const std::string&, Tensor<T>& t) { t.zero_grad(); }));
}

namespace {

template <class T>
void check_finite(const Tensor<T>& t, const std::string& layer) {
  if (!all_finite(t.data())) {
    throw NumericalError("non-finite activations after layer " + layer);
  }
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

template <class T>
Tensor<T> FocalNet<T>::head_logits(const Tensor<T>& features) const {
  const bool single = features.rank() == 1;
  Tensor<T> f = single ? ops::reshape(features, Shape{1, features.dim(0)}) : features;
  // A zero feature row has no direction; its cosine to every class is 0. The
  // row is shifted onto e_0 for normalization and its cosines masked out.
  const std::size_t B = f.dim(0), D = f.dim(1), K = head_weight_.dim(0);
  std::vector<T> shift(B * D, T(0)), keep(B * K, T(1));
  bool any_zero = false;
  for (std::size_t b = 0; b < B; ++b) {
    bool zero = true;
    for (std::size_t i = 0; i < D && zero; ++i) zero = f.data()[b * D + i] == T(0);
    if (!zero) continue;
    any_zero = true;
    shift[b * D] = T(1);
    std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(b * K), K, T(0));
  }
  if (any_zero) f = ops::add(f, Tensor<T>::from({B, D}, std::move(shift)));
  Tensor<T> cos = ops::linear(ops::l2_normalize_rows(f),
                              ops::l2_normalize_rows(head_weight_), Tensor<T>());
  if (any_zero) cos = ops::mul(cos, Tensor<T>::from({B, K}, std::move(keep)));
  Tensor<T> logits = ops::scale(cos, static_cast<T>(config_.head_scale));
  return single ? ops::reshape(logits, Shape{head_weight_.dim(0)}) : logits;
}

template <class T>
ForwardResult<T> FocalNet<T>::forward(const Tensor<T>& input, bool cache_modulator) const {
  if (input.rank() != 3 || input.dim(0) != static_cast<std::size_t>(config_.in_channels)) {
    throw DimensionError("FocalNet::forward: input " + shape_string(input.shape()) +
                         ", expected [" + std::to_string(config_.in_channels) + ",H,W]");
  }
  const T eps = static_cast<T>(config_.layernorm_eps);
  Tensor<T> x = patch_embed(ops::chw_to_hwc(input), stem_);
  check_finite(x, "stem");
  std::size_t valid_h = ceil_div(input.dim(1), stem_.patch);
  std::size_t valid_w = ceil_div(input.dim(2), stem_.patch);

  Tensor<T> last_modulator;
  const std::size_t S = stages_.size();
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      const bool last = s + 1 == S && b + 1 == stages_[s].size();
      x = focal_block(x, stages_[s][b], eps,
                      last && cache_modulator ? &last_modulator : nullptr);
      check_finite(x, "stages." + std::to_string(s) + ".blocks." + std::to_string(b));
    }
    if (s < downsamples_.size()) {
      x = patch_embed(x, downsamples_[s]);
      check_finite(x, "stages." + std::to_string(s) + ".downsample");
      valid_h = ceil_div(valid_h, downsamples_[s].patch);
      valid_w = ceil_div(valid_w, downsamples_[s].patch);
    }
  }
  x = ops::layernorm(x, norm_gamma_, norm_beta_, eps);
  Tensor<T> features = ops::global_avg_pool(ops::hwc_to_chw(x));
  ForwardResult<T> out;
  out.features = features;
  out.logits = head_logits(features);
  check_finite(out.logits, "head");

  if (cache_modulator) {
    ModulatorCache cache;
    const std::size_t H = last_modulator.dim(0), W = last_modulator.dim(1),
                      C = last_modulator.dim(2);
    cache.channels = C;
    cache.height = H;
    cache.width = W;
    cache.modulator.resize(C * H * W);
    auto m = last_modulator.data();
    for (std::size_t t = 0; t < H * W; ++t)
      for (std::size_t c = 0; c < C; ++c)
        cache.modulator[c * H * W + t] = static_cast<float>(m[t * C + c]);
    cache.stage = static_cast<int>(S) - 1;
    cache.block = static_cast<int>(stages_.back().size()) - 1;
    cache.input_shape = input.shape();
    cache.valid_height = valid_h;
    cache.valid_width = valid_w;
    out.cache = std::move(cache);
  }
  return out;
}

#define FNA_INSTANTIATE(T)                                                      \
  template std::vector<Tensor<T>> hierarchical_contextualize(                   \
      const Tensor<T>&, const FocalModulationParams<T>&);                       \
  template Tensor<T> gated_aggregate(const Tensor<T>&,                          \
                                     const std::vector<Tensor<T>>&,             \
                                     const FocalModulationParams<T>&);          \
  template FocalModulationOutput<T> focal_modulation(                           \
      const Tensor<T>&, const FocalModulationParams<T>&);                       \
  template Tensor<T> focal_block(const Tensor<T>&, const FocalBlockParams<T>&,  \
                                 T, Tensor<T>*);                                \
  template Tensor<T> patch_embed(const Tensor<T>&, const PatchEmbedParams<T>&); \
  template class FocalNet<T>;

FNA_INSTANTIATE(float)
FNA_INSTANTIATE(double)
#undef FNA_INSTANTIATE

}  // namespace fna
