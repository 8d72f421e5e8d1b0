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

#include "fna/training.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "fna/checkpoint.h"
#include "fna/error.h"
#include "fna/ops.h"
#include "fna/parallel.h"

namespace fna {

TrainConfig TrainConfig::full() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 12;
  c.lr_min = 1e-5;
  c.lr_max = 2e-3;
  c.step_size = 150;
  c.weight_decay = 2e-6;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr_min > 0) || !(lr_max > lr_min)) throw ConfigError("need 0 < lr_min < lr_max");
  if (step_size < 1) throw ConfigError("step_size must be >= 1");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(grad_clip_norm > 0)) throw ConfigError("grad_clip_norm must be > 0");
  if (!(am_margin >= 0)) throw ConfigError("am_margin must be >= 0");
  if (!(am_scale > 0)) throw ConfigError("am_scale must be > 0");
  if (!(augment_prob >= 0 && augment_prob <= 1)) throw ConfigError("augment_prob must be in [0, 1]");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("adam betas must be in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("adam_eps must be > 0");
  if (queue_depth < 1) throw ConfigError("queue_depth must be >= 1");
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return a.batch_size == b.batch_size && a.epochs == b.epochs && a.lr_min == b.lr_min &&
         a.lr_max == b.lr_max && a.step_size == b.step_size && a.weight_decay == b.weight_decay &&
         a.grad_clip_norm == b.grad_clip_norm && a.am_margin == b.am_margin &&
         a.am_scale == b.am_scale && a.augment_prob == b.augment_prob && a.seed == b.seed &&
         a.adam_beta1 == b.adam_beta1 && a.adam_beta2 == b.adam_beta2 &&
         a.adam_eps == b.adam_eps && a.serial == b.serial && a.queue_depth == b.queue_depth;
}

template <class T>
Tensor<T> am_softmax_loss(const Tensor<T>& features, const Tensor<T>& class_weights,
                          const std::vector<int>& labels, double margin, double scale,
                          const std::vector<std::string>* clip_ids) {
  if (!(margin >= 0)) throw ConfigError("am_softmax_loss: margin must be >= 0");
  if (!(scale > 0)) throw ConfigError("am_softmax_loss: scale must be > 0");
  if (features.rank() != 2 || class_weights.rank() != 2 ||
      features.dim(1) != class_weights.dim(1))
    throw DimensionError("am_softmax_loss: features " + shape_string(features.shape()) +
                         " vs class weights " + shape_string(class_weights.shape()));
  const std::size_t B = features.dim(0), D = features.dim(1);
  auto f = features.data();
  for (std::size_t b = 0; b < B; ++b) {
    bool zero = true;
    for (std::size_t d = 0; d < D && zero; ++d) zero = f[b * D + d] == T(0);
    if (zero) {
      std::string who = clip_ids && b < clip_ids->size() ? (*clip_ids)[b] : "row " + std::to_string(b);
      throw NumericalError("am_softmax_loss: zero-norm feature for clip " + who);
    }
  }
  Tensor<T> cos = ops::linear(ops::l2_normalize_rows(features),
                              ops::l2_normalize_rows(class_weights), Tensor<T>());
  Tensor<T> logits = ops::scale(ops::add_onehot(cos, labels, static_cast<T>(-margin)),
                                static_cast<T>(scale));
  return ops::cross_entropy(logits, labels);
}

template Tensor<float> am_softmax_loss(const Tensor<float>&, const Tensor<float>&,
                                       const std::vector<int>&, double, double,
                                       const std::vector<std::string>*);
template Tensor<double> am_softmax_loss(const Tensor<double>&, const Tensor<double>&,
                                        const std::vector<int>&, double, double,
                                        const std::vector<std::string>*);

double cyclic_lr(std::int64_t step, double lr_min, double lr_max, std::int64_t step_size) {
  if (step < 0) throw ConfigError("cyclic_lr: negative step");
  if (step_size < 1) throw ConfigError("cyclic_lr: step_size must be >= 1");
  const std::int64_t pos = step % (2 * step_size);
  const std::int64_t up = pos <= step_size ? pos : 2 * step_size - pos;
  const double frac = static_cast<double>(up) / static_cast<double>(step_size);
  return (1.0 - frac) * lr_min + frac * lr_max;
}

std::vector<ParamRef> parameter_refs(FocalNet<float>& model) {
  std::vector<ParamRef> refs;
  model.visit_parameters(FocalNet<float>::ParamVisitor([&](const std::string& path,
                                                           Tensor<float>& t) {
    ParamRef r;
    r.path = path;
    r.value = t.mutable_data();
    if (t.has_grad()) r.grad = t.mutable_grad();
    refs.push_back(std::move(r));
  }));
  return refs;
}

void AdamState::init(const std::vector<ParamRef>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.value.size(), 0.0f);
    v.emplace_back(p.value.size(), 0.0f);
  }
}

double clip_grad_norm(std::vector<ParamRef>& params, double clip) {
  double sq = 0;
  for (const auto& p : params)
    for (float g : p.grad) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > clip) {
    const double factor = clip / norm;
    for (auto& p : params)
      for (float& g : p.grad) g = static_cast<float>(g * factor);
  }
  return norm;
}

double optimizer_step(std::vector<ParamRef>& params, AdamState& state, double lr,
                      double weight_decay, double clip_norm, const AdamHyper& hyper) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw DimensionError("optimizer_step: optimizer state has " + std::to_string(state.m.size()) +
                         " entries for " + std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.m[i].size() != p.value.size() || (!p.grad.empty() && p.grad.size() != p.value.size()))
      throw DimensionError("optimizer_step: shape mismatch for " + p.path);
    for (float g : p.grad)
      if (std::isnan(g)) throw NumericalError("optimizer_step: NaN gradient in " + p.path);
  }
  const double norm = clip_grad_norm(params, clip_norm);
  state.step += 1;
  const double b1 = hyper.beta1, b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.empty() ? 0.0 : p.grad[k];
      const double mk = b1 * m[k] + (1 - b1) * g;
      const double vk = b2 * v[k] + (1 - b2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = (mk / c1) / (std::sqrt(vk / c2) + hyper.eps);
      const double w = p.value[k];
      p.value[k] = static_cast<float>(w - lr * (update + weight_decay * w));
    }
  }
  return norm;
}

std::uint64_t augment_seed(std::uint64_t seed, int epoch, const std::string& clip_id) {
  std::uint64_t h = fnv1a64({reinterpret_cast<const std::uint8_t*>(clip_id.data()), clip_id.size()});
  auto mix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  };
  return mix(mix(seed) ^ mix(static_cast<std::uint64_t>(epoch) + 0x51ed27ull) ^ h);
}

double evaluate_accuracy(const FocalNet<float>& model, const TrainSet& set) {
  if (set.size() == 0) throw ValidationError("evaluate_accuracy: empty split");
  std::vector<int> pred(set.size());
  parallel_items(static_cast<std::int64_t>(set.size()), [&](std::int64_t i) {
    NoGradGuard no_grad;
    const auto out = model.forward(set.inputs[i]);
    auto logits = out.logits.data();
    pred[i] = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  });
  std::size_t hit = 0;
  for (std::size_t i = 0; i < set.size(); ++i) hit += pred[i] == set.labels[i];
  return static_cast<double>(hit) / static_cast<double>(set.size());
}

namespace {

struct Batch {
  std::vector<Tensor<float>> inputs;
  std::vector<int> labels;
  std::vector<std::string> ids;
};

// Single-producer single-consumer queue of bounded depth.
class BatchQueue {
 public:
  explicit BatchQueue(std::size_t depth) : depth_(depth) {}

  bool push(Batch b) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || q_.size() < depth_; });
    if (closed_) return false;
    q_.push_back(std::move(b));
    not_empty_.notify_one();
    return true;
  }

  // False once the queue is closed and drained.
  bool pop(Batch& out) {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !q_.empty(); });
    if (q_.empty()) return false;
    out = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return true;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  std::size_t depth_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<Batch> q_;
  bool closed_ = false;
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

Batch make_batch(const TrainSet& train, const std::vector<std::size_t>& order, std::size_t begin,
                 std::size_t end, const TrainConfig& cfg, int epoch) {
  AugmentPolicy policy;
  policy.probability = cfg.augment_prob;
  Batch b;
  for (std::size_t k = begin; k < end; ++k) {
    const std::size_t i = order[k];
    b.inputs.push_back(augment(train.inputs[i], policy, augment_seed(cfg.seed, epoch, train.ids[i])));
    b.labels.push_back(train.labels[i]);
    b.ids.push_back(train.ids[i]);
  }
  return b;
}

Checkpoint snapshot(const FocalNet<float>& model, const AdamState& adam, const FocalNetConfig& mc,
                    const TrainConfig& tc, const PreprocessConfig& pc, int epoch, std::int64_t step,
                    const std::vector<EpochRecord>& history, int best_epoch, double best_val) {
  Checkpoint c;
  c.model_config = mc;
  c.train_config = tc;
  c.preprocess = pc;
  c.epoch = epoch;
  c.step = step;
  c.history = history;
  c.best_epoch = best_epoch;
  c.best_val_accuracy = best_val;
  c.model = model;
  c.adam = adam;
  return c;
}

void check_set(const TrainSet& s, const char* name, int num_classes) {
  if (s.labels.size() != s.size() || s.ids.size() != s.size())
    throw DimensionError(std::string(name) + " split: inputs, labels and ids differ in length");
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.labels[i] < 0 || s.labels[i] >= num_classes)
      throw ValidationError(std::string(name) + " split: label " + std::to_string(s.labels[i]) +
                            " of clip " + s.ids[i] + " outside [0, " +
                            std::to_string(num_classes) + ")");
}

}  // namespace

FitResult fit(const FocalNetConfig& model_config, const TrainConfig& config,
              const PreprocessConfig& preprocess, const TrainSet& train, const TrainSet& val,
              const FitOptions& options) {
  model_config.validate();
  config.validate();
  if (train.size() == 0) throw ValidationError("fit: empty training split");
  if (val.size() == 0) throw ValidationError("fit: empty validation split");
  check_set(train, "train", model_config.num_classes);
  check_set(val, "validation", model_config.num_classes);

  std::optional<FocalNet<float>> model_store;
  AdamState adam;
  int epoch_done = 0;
  std::int64_t step = 0;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val = -1;
  std::optional<Checkpoint> best;

  if (options.resume) {
    const Checkpoint& r = *options.resume;
    if (!r.model) throw UsageError("fit: resume checkpoint has no model");
    if (!(r.model_config == model_config)) throw ConfigError("fit: resume model config differs");
    model_store = *r.model;
    adam = r.adam;
    epoch_done = r.epoch;
    step = r.step;
    history = r.history;
    best_epoch = r.best_epoch;
    best_val = r.best_val_accuracy;
    if (options.checkpoint_dir && std::filesystem::exists(*options.checkpoint_dir / "best.fnackpt"))
      best = load_checkpoint(*options.checkpoint_dir / "best.fnackpt");
    else if (r.best_epoch == r.epoch)
      best = r;
  } else {
    model_store.emplace(model_config, config.seed);
  }
  FocalNet<float>& model = *model_store;
  model.set_requires_grad(true);
  {
    auto refs = parameter_refs(model);
    if (adam.m.empty()) adam.init(refs);
  }

  std::ofstream log;
  if (options.log_path) {
    if (options.log_path->has_parent_path())
      std::filesystem::create_directories(options.log_path->parent_path());
    log.open(*options.log_path, options.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open training log " + options.log_path->string());
    log << std::setprecision(17);
  }

  FitResult result;
  const int last_epoch = options.stop_after_epoch ? std::min(*options.stop_after_epoch, config.epochs)
                                                  : config.epochs;
  const AdamHyper hyper{config.adam_beta1, config.adam_beta2, config.adam_eps};
  const std::size_t B = static_cast<std::size_t>(config.batch_size);

  auto diverged = [&](int epoch, const std::string& what) {
    std::string where;
    if (options.checkpoint_dir) {
      const auto path = *options.checkpoint_dir / "last_finite.fnackpt";
      save_checkpoint(snapshot(model, adam, model_config, config, preprocess, epoch - 1, step,
                               history, best_epoch, best_val),
                      path);
      where = "; last finite state saved to " + path.string();
    }
    throw NumericalError("training diverged at step " + std::to_string(step) + " (epoch " +
                         std::to_string(epoch) + "): " + what + where);
  };

  for (int epoch = epoch_done + 1; epoch <= last_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(train.size(), config.seed, epoch);
    const std::size_t n_batches = (train.size() + B - 1) / B;

    BatchQueue queue(static_cast<std::size_t>(config.queue_depth));
    std::exception_ptr producer_error;
    std::thread producer;
    if (!config.serial) {
      producer = std::thread([&] {
        try {
          for (std::size_t bi = 0; bi < n_batches; ++bi)
            if (!queue.push(make_batch(train, order, bi * B, std::min(train.size(), (bi + 1) * B),
                                       config, epoch)))
              break;
        } catch (...) {
          producer_error = std::current_exception();
        }
        queue.close();
      });
    }
    struct Joiner {
      BatchQueue& q;
      std::thread& t;
      ~Joiner() {
        q.close();
        if (t.joinable()) t.join();
      }
    } joiner{queue, producer};

    double loss_sum = 0;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      Batch batch;
      if (config.serial) {
        batch = make_batch(train, order, bi * B, std::min(train.size(), (bi + 1) * B), config, epoch);
      } else if (!queue.pop(batch)) {
        if (producer.joinable()) producer.join();
        if (producer_error) std::rethrow_exception(producer_error);
        throw Error(ErrorCode::kValidation, "fit: batch producer stopped early");
      }

      model.zero_grad();
      Tensor<float> loss;
      try {
        std::vector<Tensor<float>> feats;
        for (const auto& x : batch.inputs) feats.push_back(model.forward(x).features);
        loss = am_softmax_loss(ops::stack(feats), model.head_weight(), batch.labels,
                               config.am_margin, config.am_scale, &batch.ids);
      } catch (const NumericalError& e) {
        diverged(epoch, e.what());
      }
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) diverged(epoch, "non-finite loss");
      fna::backward(loss);

      const double lr = cyclic_lr(step, config.lr_min, config.lr_max, config.step_size);
      auto refs = parameter_refs(model);
      double norm = 0;
      try {
        norm = optimizer_step(refs, adam, lr, config.weight_decay, config.grad_clip_norm, hyper);
      } catch (const NumericalError& e) {
        diverged(epoch, e.what());
      }
      StepLog sl{step, epoch, lr, loss_value, norm};
      result.steps.push_back(sl);
      if (log)
        log << "{\"step\":" << sl.step << ",\"epoch\":" << epoch << ",\"lr\":" << sl.lr
            << ",\"loss\":" << sl.loss << ",\"grad_norm\":" << sl.grad_norm << "}\n";
      loss_sum += loss_value;
      ++step;
    }
    model.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.train_loss = loss_sum / static_cast<double>(n_batches);
    rec.val_accuracy = evaluate_accuracy(model, val);
    history.push_back(rec);
    const bool improved = rec.val_accuracy > best_val;
    if (improved) {
      best_val = rec.val_accuracy;
      best_epoch = epoch;
    }
    Checkpoint last =
        snapshot(model, adam, model_config, config, preprocess, epoch, step, history, best_epoch, best_val);
    if (improved) best = last;
    if (options.checkpoint_dir) {
      save_checkpoint(last, *options.checkpoint_dir / "last.fnackpt");
      if (improved) save_checkpoint(last, *options.checkpoint_dir / "best.fnackpt");
    }
    if (log) log.flush();
    if (options.verbose) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream line;
      line << "epoch " << epoch << " loss " << rec.train_loss << " val_acc " << rec.val_accuracy
           << " (" << std::fixed << std::setprecision(1) << secs << " s)\n";
      std::cerr << line.str();
    }
    result.last = std::move(last);
  }

  if (!result.last.model) {
    result.last = snapshot(model, adam, model_config, config, preprocess, epoch_done, step, history,
                           best_epoch, best_val);
  }
  result.best = best ? std::move(*best) : result.last;
  return result;
}

}  // namespace fna
