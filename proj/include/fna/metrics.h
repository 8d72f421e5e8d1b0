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
#include <string>
#include <vector>

#include "fna/audio.h"
#include "fna/focalnet.h"
#include "fna/interpret.h"
#include "fna/matrix.h"

namespace fna {

// Anything that maps a log-magnitude spectrogram to class probabilities and,
// on request, a modulation map. Implementations must be safe to call from
// several threads at once.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<double> classify(const Matrix& log_mag, ModulationMap* map) const = 0;
};

// Softmax over the model's scaled cosine logits; the training margin is not
// applied here.
class FocalNetClassifier : public Classifier {
 public:
  FocalNetClassifier(const FocalNet<float>& model, int input_size, int channels = 3)
      : model_(model), input_size_(input_size), channels_(channels) {}
  std::vector<double> classify(const Matrix& log_mag, ModulationMap* map) const override;

 private:
  const FocalNet<float>& model_;
  int input_size_;
  int channels_;
};

struct EvalClip {
  std::string id;
  int label = -1;
  Matrix log_mag;
};

struct EvalRecord {
  std::string clip_id;
  int label = -1;
  int predicted = -1;                    // argmax f(x)
  int predicted_on_interpretation = -1;  // argmax f(x_int)
  double prob_input = 0;                 // f_c(x), c = predicted
  double prob_complement = 0;            // f_c(x - x_int)

  double faithfulness() const { return prob_input - prob_complement; }
};

int argmax(const std::vector<double>& p);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);
double fid_i(const std::vector<EvalRecord>& records);
double faithfulness(const std::vector<EvalRecord>& records);

// One clip against an explicit mask at spectrogram resolution.
// x_int = log_mag * mask and x - x_int = log_mag * (1 - mask) both go through
// the classifier's own preprocessing.
EvalRecord evaluate_with_mask(const Classifier& classifier, const EvalClip& clip,
                              const Matrix& mask, const std::vector<double>& input_probs);
EvalRecord evaluate_with_mask(const Classifier& classifier, const EvalClip& clip,
                              const Matrix& mask);

std::vector<EvalRecord> evaluate_at_q(const Classifier& classifier,
                                      const std::vector<EvalClip>& clips, double q,
                                      ThresholdMode mode = ThresholdMode::kUpsampleThenThreshold);

double fid_i(const Classifier& classifier, const std::vector<EvalClip>& clips, double q);
double faithfulness(const Classifier& classifier, const std::vector<EvalClip>& clips, double q);

struct SweepPoint {
  double q = 0;
  double fid_i = 0;
  double fa = 0;
  double accuracy = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;  // q strictly increasing
  std::size_t n_clips = 0;
  std::string model_id;
  std::string split;

  // Header `q,fid_i,fa,n_clips,model_id`, one row per q.
  std::string to_csv() const;
  double spearman_q_fa() const;
  double spearman_q_fid_i() const;
};

SweepResult quantile_sweep(const Classifier& classifier, const std::vector<EvalClip>& clips,
                           const std::vector<double>& q_list, std::string model_id = "",
                           std::string split = "",
                           ThresholdMode mode = ThresholdMode::kUpsampleThenThreshold);

// Fraction of retained mask cells whose row lies within half_width rows of
// center_row. NaN for an empty mask.
double band_concentration(const Matrix& mask, double center_row, int half_width);

// Exactly `retained` ones placed uniformly at random.
Matrix random_mask(std::size_t rows, std::size_t cols, std::size_t retained, std::uint64_t seed);

// Spearman rank correlation with average ranks for ties. NaN when either
// series is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Parses "start:stop:step" or a comma list into strictly increasing q values
// in [0, 1]. A grid always ends at `stop`, so 0.1:0.99:0.1 gives
// 0.1, 0.2, ..., 0.9, 0.99.
std::vector<double> parse_q_grid(const std::string& spec);

}  // namespace fna
