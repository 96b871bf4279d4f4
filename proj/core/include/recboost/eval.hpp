// Copyright 2026 The recboost Authors. All Rights Reserved.
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

// Experiment harnesses: the online predict-then-update stream and the
// offline walk over a held-out tail.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "recboost/data.hpp"
#include "recboost/metrics.hpp"
#include "recboost/model.hpp"

namespace recboost {

/// Anything that consumes one raw row per step and, once warm, returns the
/// prediction it made for that row's target before seeing it.
using StreamLearner = std::function<std::optional<double>(const Vec& raw_row)>;

/// Carries the last observed target forward after `warmup` rows, so it can
/// be compared step for step with a model of window `warmup`.
StreamLearner naive_stream(std::size_t warmup);

struct OnlineCurve {
  std::vector<std::size_t> step;  // time index of the predicted target
  std::vector<double> prediction;
  std::vector<double> truth;
  std::vector<double> cumulative;  // cumulative MSE after each prediction

  double final_value() const;
  /// step,prediction,truth,cumulative_mse
  void write_csv(std::ostream& out) const;
};

/// Streams every row of the raw frame through `learner`. Throws DataError if
/// the learner never becomes warm.
OnlineCurve run_online_protocol(const StreamLearner& learner, const SeriesFrame& frame);
/// Builds an OnlineForecaster from `model` and `config` and streams the frame.
OnlineCurve run_online_protocol(const HybridModel& model, const SeriesFrame& frame,
                                const TrainingConfig& config);

enum class PredictMode { kOneStep, kRecursive };

struct OfflineResult {
  /// Time index of each predicted value.
  std::vector<std::size_t> step;
  Vec prediction;
  /// Observed values; shorter than `prediction` when a recursive forecast
  /// runs past the end of the series.
  Vec truth;

  /// Metrics over the predictions that have a matching truth.
  std::optional<Forecast> scored() const;
};

/// One-step mode walks every origin from `test_begin` using true past values
/// and the model's direct horizon. Recursive mode issues `horizon` chained
/// one-step predictions starting at `test_begin`. No parameters change.
OfflineResult run_offline_protocol(const HybridModel& model, const SeriesFrame& series,
                                   std::size_t test_begin, PredictMode mode,
                                   std::size_t horizon = 1);

/// Result of training on one synthetic integrity task with an 80/20
/// chronological split. Targets are standardized with training statistics for
/// optimisation; every RMSE here is on the raw target scale.
struct SyntheticRun {
  std::vector<double> train_loss;  // per epoch, standardized scale
  std::vector<double> test_rmse;  // per epoch
  double initial_rmse = 0.0;  // before the first update
  double target_std = 0.0;  // population std of the test targets
  double seconds = 0.0;
  std::uint64_t checksum = 0;

  double final_rmse() const { return test_rmse.back(); }
  /// epoch,train_loss,test_rmse with epoch 0 holding the initial RMSE.
  void write_csv(std::ostream& out) const;
};

/// Model settings used for each task unless overridden. The window always
/// matches the generator (4 for replicate, 1 otherwise).
TrainingConfig synthetic_config(SyntheticTask task);

/// Generates `n` samples from `data_seed`, builds a model from `config.seed`
/// and trains it. The inverse task mixes inputs with random_mixing(data_seed + 1).
SyntheticRun run_synthetic(SyntheticTask task, std::uint64_t data_seed, std::size_t n,
                           const TrainingConfig& config, bool freeze_extractor = false,
                           bool freeze_gbdt = false);

struct AblationRow {
  std::string variant;  // full, frozen_extractor, frozen_gbdt
  double test_rmse = 0.0;
  double seconds = 0.0;
};

/// The three variants on one task with identical seeds and epoch budget.
std::vector<AblationRow> run_ablation(SyntheticTask task, std::uint64_t data_seed, std::size_t n,
                                      const TrainingConfig& config);
/// variant,test_rmse,seconds
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

/// Gradient-check sweep over cell kinds, poolings, depths and tree counts.
/// Each (combination, seed) gets a fresh random model, a random head, a
/// standard-normal window and target.
struct GradCheckMatrix {
  std::vector<CellKind> cells{CellKind::kLstm, CellKind::kGru};
  std::vector<Pooling> poolings{Pooling::kLast, Pooling::kMean, Pooling::kMax};
  std::vector<std::size_t> depths{1, 2, 3};
  std::vector<std::size_t> tree_counts{1, 3};
  std::size_t seeds = 50;
  std::uint64_t first_seed = 0;
  std::size_t hidden_dim = 4;
  std::size_t input_dim = 2;
  std::size_t window = 5;
  std::size_t layers = 1;
  std::size_t horizon = 1;
  double shrinkage = 0.1;
  double eps = 1e-6;
  double tol = 1e-5;
};

struct GradCheckSweep {
  GradCheckReport report;
  std::size_t cases = 0;
  std::size_t failed_cases = 0;
};

GradCheckSweep run_gradcheck_matrix(const GradCheckMatrix& matrix);

}  // namespace recboost
