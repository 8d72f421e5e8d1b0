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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fna/audio.h"
#include "fna/focalnet.h"
#include "fna/tensor.h"

namespace fna {

struct TrainConfig {
  int batch_size = 16;
  int epochs = 100;
  double lr_min = 1e-8;
  double lr_max = 2e-4;
  std::int64_t step_size = 65000;  // half period of the triangular schedule
  double weight_decay = 2e-6;
  double grad_clip_norm = 5.0;
  double am_margin = 0.2;
  double am_scale = 30.0;
  double augment_prob = 0.75;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Serial mode prepares batches on the training thread. Otherwise a
  // producer thread fills a bounded queue of `queue_depth` batches.
  bool serial = true;
  int queue_depth = 4;

  static TrainConfig full();
  static TrainConfig desk();
  void validate() const;
};
bool operator==(const TrainConfig& a, const TrainConfig& b);

// Cross-entropy over scale * (cos - margin * onehot), with cos the cosine
// between L2-normalized feature rows [B,D] and class weight rows [K,D].
// `clip_ids`, when given, names the offending clip on a zero-norm row.
template <class T>
Tensor<T> am_softmax_loss(const Tensor<T>& features, const Tensor<T>& class_weights,
                          const std::vector<int>& labels, double margin, double scale,
                          const std::vector<std::string>* clip_ids = nullptr);

// Triangular wave between lr_min (even multiples of step_size) and lr_max
// (odd multiples).
double cyclic_lr(std::int64_t step, double lr_min, double lr_max, std::int64_t step_size);

struct ParamRef {
  std::string path;
  std::span<float> value;
  std::span<float> grad;  // empty means zero gradient
};

// Collects every model parameter in visit order with its current gradient.
std::vector<ParamRef> parameter_refs(FocalNet<float>& model);

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<float>> m, v;  // per parameter, visit order
  void init(const std::vector<ParamRef>& params);
};

struct AdamHyper {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Global L2 norm of all gradients, scaling them by clip / norm when norm
// exceeds clip. Returns the norm before clipping.
double clip_grad_norm(std::vector<ParamRef>& params, double clip);

// NaN check (NumericalError naming the parameter), global-norm clipping,
// then one Adam step with decoupled weight decay. Returns the pre-clip norm.
double optimizer_step(std::vector<ParamRef>& params, AdamState& state, double lr,
                      double weight_decay, double clip_norm, const AdamHyper& hyper = {});

struct EpochRecord {
  int epoch = 0;  // 1-based
  std::int64_t step = 0;
  double train_loss = 0;
  double val_accuracy = 0;
};

struct Checkpoint {
  FocalNetConfig model_config;
  TrainConfig train_config;
  PreprocessConfig preprocess;
  int epoch = 0;  // completed epochs
  std::int64_t step = 0;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_accuracy = -1;
  std::optional<FocalNet<float>> model;
  AdamState adam;
};

// Preprocessed clips; inputs are [C, S, S] model inputs.
struct TrainSet {
  std::vector<Tensor<float>> inputs;
  std::vector<int> labels;
  std::vector<std::string> ids;
  std::size_t size() const { return inputs.size(); }
};

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double loss = 0;
  double grad_norm = 0;
};

struct FitOptions {
  // When set, receives last.fnackpt / best.fnackpt after every epoch and
  // last_finite.fnackpt on divergence.
  std::optional<std::filesystem::path> checkpoint_dir;
  // Line-delimited JSON with step, lr, loss and grad_norm.
  std::optional<std::filesystem::path> log_path;
  // Continue from this state instead of a fresh model.
  const Checkpoint* resume = nullptr;
  // Stop after this many total epochs (defaults to TrainConfig::epochs).
  std::optional<int> stop_after_epoch;
  bool verbose = false;
};

struct FitResult {
  Checkpoint last;
  Checkpoint best;
  std::vector<StepLog> steps;
};

// Deterministic given the seed in serial mode. A non-finite loss or
// activation saves the last finite state (when a checkpoint directory is
// configured) and throws NumericalError.
FitResult fit(const FocalNetConfig& model_config, const TrainConfig& config,
              const PreprocessConfig& preprocess, const TrainSet& train, const TrainSet& val,
              const FitOptions& options = {});

// Argmax accuracy of the model over preprocessed inputs.
double evaluate_accuracy(const FocalNet<float>& model, const TrainSet& set);

// Per-clip augmentation seed from the run seed, epoch and clip id.
std::uint64_t augment_seed(std::uint64_t seed, int epoch, const std::string& clip_id);

}  // namespace fna
