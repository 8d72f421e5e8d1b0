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

#include "fna/metrics.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "fna/error.h"
#include "fna/ops.h"
#include "fna/parallel.h"

namespace fna {

std::vector<double> FocalNetClassifier::classify(const Matrix& log_mag, ModulationMap* map) const {
  NoGradGuard no_grad;
  auto input = to_model_input(log_mag, input_size_, channels_);
  auto fwd = model_.forward(input, map != nullptr);
  if (map) *map = modulation_map(fwd.cache);
  auto p = ops::softmax(fwd.logits.to_double());
  return std::vector<double>(p.data().begin(), p.data().end());
}

int argmax(const std::vector<double>& p) {
  if (p.empty()) throw DimensionError("argmax of empty vector");
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty()) throw ValidationError("accuracy: no predictions");
  if (predictions.size() != labels.size()) throw DimensionError("accuracy: length mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double fid_i(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ValidationError("fid_i: no records");
  std::size_t agree = 0;
  for (const auto& r : records) agree += r.predicted == r.predicted_on_interpretation;
  return static_cast<double>(agree) / static_cast<double>(records.size());
}

double faithfulness(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ValidationError("faithfulness: no records");
  double s = 0;
  for (const auto& r : records) s += r.faithfulness();
  return s / static_cast<double>(records.size());
}

EvalRecord evaluate_with_mask(const Classifier& classifier, const EvalClip& clip,
                              const Matrix& mask, const std::vector<double>& input_probs) {
  EvalRecord r;
  r.clip_id = clip.id;
  r.label = clip.label;
  r.predicted = argmax(input_probs);
  r.prob_input = input_probs[r.predicted];
  const auto p_int = classifier.classify(mask_for_model(clip.log_mag, mask), nullptr);
  r.predicted_on_interpretation = argmax(p_int);
  const auto p_rest = classifier.classify(mask_complement(clip.log_mag, mask), nullptr);
  r.prob_complement = p_rest.at(r.predicted);
  return r;
}

EvalRecord evaluate_with_mask(const Classifier& classifier, const EvalClip& clip,
                              const Matrix& mask) {
  return evaluate_with_mask(classifier, clip, mask, classifier.classify(clip.log_mag, nullptr));
}

namespace {

struct BaseEval {
  std::vector<double> probs;
  ModulationMap map;
};

std::vector<BaseEval> base_evaluations(const Classifier& classifier,
                                       const std::vector<EvalClip>& clips) {
  std::vector<BaseEval> base(clips.size());
  parallel_items(static_cast<std::int64_t>(clips.size()), [&](std::int64_t i) {
    base[i].probs = classifier.classify(clips[i].log_mag, &base[i].map);
  });
  return base;
}

std::vector<EvalRecord> records_at(const Classifier& classifier,
                                   const std::vector<EvalClip>& clips,
                                   const std::vector<BaseEval>& base, double q,
                                   ThresholdMode mode) {
  std::vector<EvalRecord> records(clips.size());
  parallel_items(static_cast<std::int64_t>(clips.size()), [&](std::int64_t i) {
    const auto& c = clips[i];
    auto mask = threshold_mask(base[i].map, q, c.log_mag.rows, c.log_mag.cols, mode);
    records[i] = evaluate_with_mask(classifier, c, mask.mask, base[i].probs);
  });
  return records;
}

void check_q_list(const std::vector<double>& q_list) {
  if (q_list.empty()) throw ValidationError("quantile sweep: empty q list");
  for (std::size_t i = 0; i < q_list.size(); ++i) {
    if (!(q_list[i] >= 0.0 && q_list[i] <= 1.0))
      throw ValidationError("quantile sweep: q outside [0, 1]: " + std::to_string(q_list[i]));
    if (i && !(q_list[i] > q_list[i - 1]))
      throw ValidationError("quantile sweep: q values must be strictly increasing");
  }
}

}  // namespace

std::vector<EvalRecord> evaluate_at_q(const Classifier& classifier,
                                      const std::vector<EvalClip>& clips, double q,
                                      ThresholdMode mode) {
  if (clips.empty()) throw ValidationError("evaluate_at_q: no clips");
  return records_at(classifier, clips, base_evaluations(classifier, clips), q, mode);
}

double fid_i(const Classifier& classifier, const std::vector<EvalClip>& clips, double q) {
  return fid_i(evaluate_at_q(classifier, clips, q));
}

double faithfulness(const Classifier& classifier, const std::vector<EvalClip>& clips, double q) {
  return faithfulness(evaluate_at_q(classifier, clips, q));
}

SweepResult quantile_sweep(const Classifier& classifier, const std::vector<EvalClip>& clips,
                           const std::vector<double>& q_list, std::string model_id,
                           std::string split, ThresholdMode mode) {
  check_q_list(q_list);
  if (clips.empty()) throw ValidationError("quantile sweep: no clips");
  const auto base = base_evaluations(classifier, clips);
  SweepResult out;
  out.n_clips = clips.size();
  out.model_id = std::move(model_id);
  out.split = std::move(split);
  std::vector<int> preds, labels;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    preds.push_back(argmax(base[i].probs));
    labels.push_back(clips[i].label);
  }
  const bool labelled = std::all_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
  for (double q : q_list) {
    const auto records = records_at(classifier, clips, base, q, mode);
    SweepPoint p;
    p.q = q;
    p.fid_i = fid_i(records);
    p.fa = faithfulness(records);
    p.accuracy = labelled ? accuracy(preds, labels) : std::numeric_limits<double>::quiet_NaN();
    out.points.push_back(p);
  }
  return out;
}

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  os << "q,fid_i,fa,n_clips,model_id\n";
  os << std::setprecision(17);
  for (const auto& p : points)
    os << p.q << ',' << p.fid_i << ',' << p.fa << ',' << n_clips << ',' << model_id << '\n';
  return os.str();
}

double SweepResult::spearman_q_fa() const {
  std::vector<double> q, v;
  for (const auto& p : points) {
    q.push_back(p.q);
    v.push_back(p.fa);
  }
  return spearman(q, v);
}

double SweepResult::spearman_q_fid_i() const {
  std::vector<double> q, v;
  for (const auto& p : points) {
    q.push_back(p.q);
    v.push_back(p.fid_i);
  }
  return spearman(q, v);
}

namespace {
std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}
}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("spearman: need two equal series");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1) / 2;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

double band_concentration(const Matrix& mask, double center_row, int half_width) {
  std::size_t in = 0, total = 0;
  for (std::size_t r = 0; r < mask.rows; ++r) {
    const bool near = std::abs(static_cast<double>(r) - center_row) <= half_width;
    for (std::size_t c = 0; c < mask.cols; ++c) {
      if (mask(r, c) != 0.0f) {
        ++total;
        in += near;
      }
    }
  }
  if (total == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(in) / static_cast<double>(total);
}

Matrix random_mask(std::size_t rows, std::size_t cols, std::size_t retained, std::uint64_t seed) {
  Matrix m(rows, cols);
  if (retained > m.size()) throw ConfigError("random_mask: more retained cells than cells");
  std::vector<std::size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < retained; ++i) {
    const std::size_t j = i + rng() % (idx.size() - i);
    std::swap(idx[i], idx[j]);
    m.data[idx[i]] = 1.0f;
  }
  return m;
}

std::vector<double> parse_q_grid(const std::string& spec) {
  std::vector<double> q;
  auto parse = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ValidationError("bad q value '" + s + "'");
    return v;
  };
  if (std::count(spec.begin(), spec.end(), ':') == 2) {
    const auto a = spec.find(':'), b = spec.rfind(':');
    const double start = parse(spec.substr(0, a));
    const double stop = parse(spec.substr(a + 1, b - a - 1));
    const double step = parse(spec.substr(b + 1));
    if (!(step > 0)) throw ValidationError("q grid step must be positive");
    for (int i = 0;; ++i) {
      const double v = start + i * step;
      if (v > stop + 1e-9) break;
      q.push_back(std::round(v * 1e9) / 1e9);
    }
    if (q.empty() || q.back() < stop - 1e-9) q.push_back(stop);
  } else {
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) q.push_back(parse(item));
  }
  check_q_list(q);
  return q;
}

}  // namespace fna
