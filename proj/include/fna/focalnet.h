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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fna/tensor.h"

namespace fna {

struct FocalNetConfig {
  std::vector<int> stage_depths{2, 2, 18, 2};
  std::vector<int> stage_dims{128, 256, 512, 1024};
  int in_channels = 3;
  int input_size = 224;
  int patch_size = 4;        // stem patch
  int downsample_patch = 2;  // between stages
  int num_classes = 50;
  // Focal levels L and their kernel sizes k^1..k^L, shared by every stage.
  // `focal_window` is the level-1 kernel; when `focal_kernels` is empty the
  // kernels are focal_window + 2 * (level - 1).
  int focal_levels = 2;
  int focal_window = 3;
  std::vector<int> focal_kernels{3, 5};
  int mlp_ratio = 4;
  double layernorm_eps = 1e-5;
  // Cosine logits are multiplied by this before the softmax.
  double head_scale = 30.0;

  static FocalNetConfig base();  // (2,2,18,2) x 128, ESC-50 head
  static FocalNetConfig tiny();  // depths (1,1), dims (8,16), 32x32 input
  static FocalNetConfig desk();  // small model for CPU training runs

  // Channel progression dim, 2*dim, 4*dim, ... for the current depth count.
  void set_base_dim(int dim);
  std::vector<int> kernel_sizes() const;
  // Throws ConfigError on inconsistent settings.
  void validate() const;
  // Side of the final feature map for a square input of `input_size`.
  std::vector<std::size_t> stage_resolutions(std::size_t input) const;
};

bool operator==(const FocalNetConfig& a, const FocalNetConfig& b);

// Weights of one focal modulation layer. All linear transforms act per
// location on token-major [H,W,C] maps.
template <class T>
struct FocalModulationParams {
  Tensor<T> q_weight, q_bias;        // query q(.)
  Tensor<T> z_weight, z_bias;        // f_z, producing Z^0
  Tensor<T> gate_weight, gate_bias;  // f_g, L + 1 gate channels
  Tensor<T> h_weight, h_bias;        // h(.)
  std::vector<Tensor<T>> kernels;    // per level, [C, k, k]

  std::size_t dim() const { return q_weight.dim(0); }
  std::size_t levels() const { return kernels.size(); }
};

// Z^1..Z^L as [H,W,C], followed by Z^{L+1}: the global average of Z^L
// tiled back to [H,W,C].
template <class T>
std::vector<Tensor<T>> hierarchical_contextualize(
    const Tensor<T>& x, const FocalModulationParams<T>& p);

// h(sum_l G^l * Z^l) with G = f_g(x) giving one scalar gate per level and
// location.
template <class T>
Tensor<T> gated_aggregate(const Tensor<T>& x,
                          const std::vector<Tensor<T>>& contexts,
                          const FocalModulationParams<T>& p);

template <class T>
struct FocalModulationOutput {
  Tensor<T> y;          // q(x) * modulator
  Tensor<T> modulator;  // m(i, X), post-h, [H,W,C]
};

template <class T>
FocalModulationOutput<T> focal_modulation(const Tensor<T>& x,
                                          const FocalModulationParams<T>& p);

template <class T>
struct FocalBlockParams {
  Tensor<T> norm1_gamma, norm1_beta;
  FocalModulationParams<T> modulation;
  Tensor<T> norm2_gamma, norm2_beta;
  Tensor<T> fc1_weight, fc1_bias, fc2_weight, fc2_bias;
};

// Pre-norm residual block: x + FM(LN(x)), then + MLP(LN(.)).
// When `modulator` is non-null it receives the block's modulator.
template <class T>
Tensor<T> focal_block(const Tensor<T>& x, const FocalBlockParams<T>& p, T eps,
                      Tensor<T>* modulator = nullptr);

template <class T>
struct PatchEmbedParams {
  std::size_t patch = 4;
  Tensor<T> weight;  // [out, patch * patch * in]
  Tensor<T> bias;    // [out]
};

// [H,W,C] -> [ceil(H/p), ceil(W/p), out]; equivalent to a convolution with
// kernel = stride = p over a bottom/right zero-padded map.
template <class T>
Tensor<T> patch_embed(const Tensor<T>& x, const PatchEmbedParams<T>& p);

// Modulator of the final focal block of the final stage from one forward.
struct ModulatorCache {
  std::vector<float> modulator;  // [C,H,W]
  std::size_t channels = 0, height = 0, width = 0;
  int stage = -1, block = -1;
  Shape input_shape;
  // Map cells covering the unpadded input; the rest stem from zero padding.
  std::size_t valid_height = 0, valid_width = 0;
};

template <class T>
struct ForwardResult {
  Tensor<T> logits;    // [num_classes], head_scale * cosine
  Tensor<T> features;  // [D], pooled final features fed to the head
  std::optional<ModulatorCache> cache;
};

template <class T>
class FocalNet {
 public:
  using ParamVisitor = std::function<void(const std::string&, Tensor<T>&)>;
  using ConstParamVisitor =
      std::function<void(const std::string&, const Tensor<T>&)>;

  // Random initialization: truncated normal (std 0.02) linear weights, zero
  // biases, unit/zero layer norms, U(-1/k, 1/k) depth-wise kernels.
  FocalNet(FocalNetConfig config, std::uint64_t seed);
  FocalNet(const FocalNet& other);
  FocalNet& operator=(const FocalNet& other);
  FocalNet(FocalNet&&) noexcept = default;
  FocalNet& operator=(FocalNet&&) noexcept = default;

  const FocalNetConfig& config() const { return config_; }

  // input: [in_channels, H, W]. Throws NumericalError naming the first layer
  // whose activations are not finite.
  ForwardResult<T> forward(const Tensor<T>& input, bool cache_modulator = false) const;

  // Scaled cosine logits for pooled features shaped [D] or [B, D].
  Tensor<T> head_logits(const Tensor<T>& features) const;

  void visit_parameters(const ParamVisitor& f);
  void visit_parameters(const ConstParamVisitor& f) const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);
  void zero_grad();

  template <class U>
  FocalNet<U> cast() const;

  const PatchEmbedParams<T>& stem() const { return stem_; }
  std::vector<std::vector<FocalBlockParams<T>>>& stages() { return stages_; }
  const std::vector<std::vector<FocalBlockParams<T>>>& stages() const { return stages_; }
  const Tensor<T>& head_weight() const { return head_weight_; }

 private:
  struct Uninitialized {};
  FocalNet(FocalNetConfig config, Uninitialized);
  void allocate();
  void copy_values_from(const FocalNet& other);

  template <class U>
  friend class FocalNet;

  FocalNetConfig config_;
  PatchEmbedParams<T> stem_;
  std::vector<std::vector<FocalBlockParams<T>>> stages_;
  std::vector<PatchEmbedParams<T>> downsamples_;
  Tensor<T> norm_gamma_, norm_beta_;
  Tensor<T> head_weight_;  // [num_classes, D], bias-free
};

template <class T>
template <class U>
FocalNet<U> FocalNet<T>::cast() const {
  FocalNet<U> out(config_, typename FocalNet<U>::Uninitialized{});
  std::vector<const Tensor<T>*> src;
  visit_parameters(ConstParamVisitor(
      [&](const std::string&, const Tensor<T>& t) { src.push_back(&t); }));
  std::size_t i = 0;
  out.visit_parameters(typename FocalNet<U>::ParamVisitor(
      [&](const std::string&, Tensor<U>& t) {
        auto s = src[i++]->data();
        auto d = t.mutable_data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] = static_cast<U>(s[k]);
      }));
  return out;
}

extern template class FocalNet<float>;
extern template class FocalNet<double>;

}  // namespace fna
