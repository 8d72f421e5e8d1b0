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

#include "fna/serialize.h"

#include <set>
#include <string>

#include "fna/error.h"

namespace fna {

namespace {

// Reads known keys from an object and rejects the rest.
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ParseError(where_ + ": expected an object");
  }
  ~Fields() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ParseError(where_ + ": unknown key '" + k + "'");
  }

  template <class V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<V>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where_ + "." + key + ": " + e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

Json to_json(const FocalNetConfig& c) {
  Json j;
  j["stage_depths"] = c.stage_depths;
  j["stage_dims"] = c.stage_dims;
  j["in_channels"] = c.in_channels;
  j["input_size"] = c.input_size;
  j["patch_size"] = c.patch_size;
  j["downsample_patch"] = c.downsample_patch;
  j["num_classes"] = c.num_classes;
  j["focal_levels"] = c.focal_levels;
  j["focal_window"] = c.focal_window;
  j["focal_kernels"] = c.focal_kernels;
  j["mlp_ratio"] = c.mlp_ratio;
  j["layernorm_eps"] = c.layernorm_eps;
  j["head_scale"] = c.head_scale;
  return j;
}

void merge_json(FocalNetConfig& c, const Json& j) {
  Fields f(j, "model");
  f.get("stage_depths", c.stage_depths);
  f.get("stage_dims", c.stage_dims);
  f.get("in_channels", c.in_channels);
  f.get("input_size", c.input_size);
  f.get("patch_size", c.patch_size);
  f.get("downsample_patch", c.downsample_patch);
  f.get("num_classes", c.num_classes);
  f.get("focal_levels", c.focal_levels);
  f.get("focal_window", c.focal_window);
  f.get("focal_kernels", c.focal_kernels);
  f.get("mlp_ratio", c.mlp_ratio);
  f.get("layernorm_eps", c.layernorm_eps);
  f.get("head_scale", c.head_scale);
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr_min"] = c.lr_min;
  j["lr_max"] = c.lr_max;
  j["step_size"] = c.step_size;
  j["weight_decay"] = c.weight_decay;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["am_margin"] = c.am_margin;
  j["am_scale"] = c.am_scale;
  j["augment_prob"] = c.augment_prob;
  j["seed"] = c.seed;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["serial"] = c.serial;
  j["queue_depth"] = c.queue_depth;
  return j;
}

void merge_json(TrainConfig& c, const Json& j) {
  Fields f(j, "train");
  f.get("batch_size", c.batch_size);
  f.get("epochs", c.epochs);
  f.get("lr_min", c.lr_min);
  f.get("lr_max", c.lr_max);
  f.get("step_size", c.step_size);
  f.get("weight_decay", c.weight_decay);
  f.get("grad_clip_norm", c.grad_clip_norm);
  f.get("am_margin", c.am_margin);
  f.get("am_scale", c.am_scale);
  f.get("augment_prob", c.augment_prob);
  f.get("seed", c.seed);
  f.get("adam_beta1", c.adam_beta1);
  f.get("adam_beta2", c.adam_beta2);
  f.get("adam_eps", c.adam_eps);
  f.get("serial", c.serial);
  f.get("queue_depth", c.queue_depth);
}

Json to_json(const StftParams& c) {
  Json j;
  j["n_fft"] = c.n_fft;
  j["win_length"] = c.win_length;
  j["hop_length"] = c.hop_length;
  j["sample_rate"] = c.sample_rate;
  j["center"] = c.center;
  j["eps"] = c.eps;
  return j;
}

void merge_json(StftParams& c, const Json& j) {
  Fields f(j, "stft");
  f.get("n_fft", c.n_fft);
  f.get("win_length", c.win_length);
  f.get("hop_length", c.hop_length);
  f.get("sample_rate", c.sample_rate);
  f.get("center", c.center);
  f.get("eps", c.eps);
}

Json to_json(const PreprocessConfig& c) {
  Json j;
  j["sample_rate"] = c.sample_rate;
  j["stft"] = to_json(c.stft);
  j["input_size"] = c.input_size;
  j["channels"] = c.channels;
  return j;
}

void merge_json(PreprocessConfig& c, const Json& j) {
  Fields f(j, "preprocess");
  f.get("sample_rate", c.sample_rate);
  if (const Json* s = f.child("stft")) merge_json(c.stft, *s);
  f.get("input_size", c.input_size);
  f.get("channels", c.channels);
}

}  // namespace fna
