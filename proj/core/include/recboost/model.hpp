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

// The end-to-end hybrid predictor: a recurrent stack summarises a window of
// feature rows, the pooled hidden state (with a constant 1 prepended) feeds a
// soft GBDT, and one backward pass carries the boosting loss through the
// trees into every recurrent gate.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recboost/boosting.hpp"
#include "recboost/data.hpp"
#include "recboost/numerics.hpp"
#include "recboost/recurrent.hpp"

namespace recboost {

/// Architecture and optimisation settings. Every field is range-checked by
/// validate().
struct TrainingConfig {
  CellKind cell = CellKind::kLstm;
  Pooling pooling = Pooling::kLast;
  std::size_t hidden_dim = 8;
  std::size_t layers = 1;
  std::size_t window = 5;
  std::size_t horizon = 1;
  std::size_t depth = 2;
  std::size_t num_trees = 5;
  double shrinkage = 0.1;
  double learning_rate = 0.01;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  std::optional<double> clip_norm;
  std::size_t online_steps = 1;

  /// Throws UsageError naming the first out-of-range field.
  void validate() const;
};

class HybridModel {
 public:
  /// Throws ShapeError unless the pieces fit together.
  HybridModel(RecurrentStack extractor, Pooling pooling, SoftGBDT gbdt, std::size_t window,
              std::size_t depth);

  /// Default initialization: recurrent weights uniform on +-1/sqrt(q) with
  /// zero biases, hyperplanes likewise, leaves uniform on [-0.1, 0.1], g0 = 0.
  static HybridModel random(const TrainingConfig& config, std::size_t input_dim, Rng& rng);

  const RecurrentStack& extractor() const { return extractor_; }
  RecurrentStack& extractor() { return extractor_; }
  const SoftGBDT& gbdt() const { return gbdt_; }
  SoftGBDT& gbdt() { return gbdt_; }
  Pooling pooling() const { return pooling_; }
  std::size_t window() const { return window_; }
  std::size_t horizon() const { return gbdt_.output_dim(); }
  std::size_t depth() const { return depth_; }
  std::size_t input_dim() const { return extractor_.input_dim(); }
  std::size_t hidden_dim() const { return extractor_.hidden_dim(); }

  bool extractor_frozen() const { return extractor_frozen_; }
  bool gbdt_frozen() const { return gbdt_frozen_; }
  void set_extractor_frozen(bool frozen) { extractor_frozen_ = frozen; }
  void set_gbdt_frozen(bool frozen) { gbdt_frozen_ = frozen; }

  /// Standardization applied to raw feature rows; feature 0 is the target.
  const std::optional<Scaler>& scaler() const { return scaler_; }
  void set_scaler(Scaler scaler);

 private:
  RecurrentStack extractor_;
  Pooling pooling_;
  SoftGBDT gbdt_;
  std::size_t window_;
  std::size_t depth_;
  bool extractor_frozen_ = false;
  bool gbdt_frozen_ = false;
  std::optional<Scaler> scaler_;
};

struct ForwardTrace {
  SequenceTrace sequence;
  PooledFeature pooled;
  Vec h_aug;
  BoostTrace boost;

  const Vec& prediction() const { return boost.prediction; }
};

/// Window rows are already on the model's (standardized) scale.
ForwardTrace forward(const HybridModel& model, std::span<const Vec> window);

/// Gradients mirroring the model's parameters: one RecurrentGradients per
/// layer and one gradient per leaf and hyperplane of every tree.
struct GradientSet {
  std::vector<RecurrentGradients> extractor;
  std::vector<std::vector<Vec>> leaves;
  std::vector<std::vector<Vec>> hyperplanes;

  static GradientSet zeros_like(const HybridModel& model);
};

/// Fills the trace's residuals and returns dE/dtheta. Frozen components get
/// zero gradients but still pass gradients through.
GradientSet backward(const HybridModel& model, ForwardTrace& trace, const Vec& y_true);

/// E = sum_j |r_j - nu o_j|^2 for one window.
double total_loss(const HybridModel& model, std::span<const Vec> window, const Vec& y_true);

/// theta <- theta - lr * grad for every unfrozen parameter, after optional
/// global-norm clipping. A frozen component's gradients may be left empty.
/// Throws NumericError naming the first non-finite gradient entry.
void sgd_step(HybridModel& model, const GradientSet& grads, double learning_rate,
              std::optional<double> clip_norm = std::nullopt);

/// One named block of parameters, e.g. "lstm.layer0.W_f" or "gbdt.tree2.leaf5".
struct ParameterBlock {
  std::string group;
  std::string path;
  std::span<double> values;
  bool frozen;
};

/// Every parameter block in a fixed order (layers, gates, weights before
/// biases; then trees, hyperplanes before leaves).
std::vector<ParameterBlock> parameter_blocks(HybridModel& model);
/// The gradient blocks matching parameter_blocks() one to one.
std::vector<ParameterBlock> gradient_blocks(const HybridModel& model, GradientSet& grads);

/// FNV-1a over the bit patterns of every parameter.
std::uint64_t parameter_checksum(const HybridModel& model);

struct TrainReport {
  std::vector<double> train_loss;  // mean E per epoch
  std::vector<double> eval_metric;  // RMSE on the evaluation windows per epoch
  double seconds = 0.0;
  std::uint64_t checksum = 0;

  /// epoch,train_loss,eval_rmse rows plus a trailing checksum comment.
  /// Wall-clock time is left out so equal runs give identical files.
  void write_csv(std::ostream& out) const;
};

/// Per-epoch pass over `train` in a seeded shuffled order with one SGD step
/// per window. Windows are on the model scale; the evaluation RMSE is taken
/// on the raw target scale when the model carries a scaler.
TrainReport train_offline(HybridModel& model, std::span<const Window> train,
                          const TrainingConfig& config, std::span<const Window> eval = {});

/// A model built from `config.seed` and trained on raw series blocks: the
/// scaler is fit on every training row, g0 is the mean standardized training
/// target, and each block is windowed on its own.
struct FittedModel {
  HybridModel model;
  TrainReport report;
};
FittedModel fit_series(std::span<const SeriesFrame> train_blocks, const TrainingConfig& config,
                       const SeriesFrame* eval = nullptr);

/// Raw-scale prediction for raw feature rows.
Vec predict(const HybridModel& model, std::span<const Vec> raw_window);

/// `horizon` one-step predictions, each appended to the window (as if it
/// were observed) before the next. Requires a scalar-output, target-only
/// model; throws UsageError otherwise.
Vec predict_recursive(const HybridModel& model, std::span<const Vec> raw_seed_window,
                      std::size_t horizon);

/// Predict-then-update learner over a stream of raw feature rows with a
/// running scaler. The first `window` rows only warm up the scaler.
class OnlineForecaster {
 public:
  OnlineForecaster(HybridModel model, const TrainingConfig& config);

  bool ready() const { return history_.size() >= model_.window(); }
  /// Raw-scale prediction of the next target. Throws DataError before
  /// `window` observations have arrived.
  double predict_next() const;
  /// Feeds one raw row. Once warm, returns the prediction that was made for
  /// this row before it arrived, then trains on it and updates the scaler.
  std::optional<double> observe(const Vec& raw_row);

  const HybridModel& model() const { return model_; }
  const Scaler& scaler() const { return scaler_; }

 private:
  std::vector<Vec> standardized_window() const;

  HybridModel model_;
  TrainingConfig config_;
  Scaler scaler_;
  std::vector<Vec> history_;  // raw rows, newest last, at most `window` kept
  bool head_initialized_ = false;
};

struct GradCheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  bool passed = true;
};

/// Compares backward() against central differences of E, entry by entry,
/// with relative error |a - n| / max(1e-8, |a| + |n|). The differences
/// recompute the whole forward pass, residuals included. Frozen blocks are
/// skipped. Throws UsageError unless eps lies in [1e-8, 1e-4].
GradCheckReport grad_check(const HybridModel& model, std::span<const Vec> window,
                           const Vec& y_true, double eps, double tol);
/// Same comparison for an externally supplied gradient.
GradCheckReport compare_gradients(const HybridModel& model, std::span<const Vec> window,
                                  const Vec& y_true, double eps, double tol,
                                  const GradientSet& analytic);
/// Merges per-group maxima across several reports, keeping first-seen order.
void merge_report(GradCheckReport& into, const GradCheckReport& from);

/// Versioned text format; see README for the field order.
void save(const HybridModel& model, std::ostream& out);
void save(const HybridModel& model, const std::string& path);
HybridModel load(std::istream& in, const std::string& source = "<stream>");
HybridModel load(const std::string& path);

struct CrossValidationResult {
  std::size_t best_index = 0;
  TrainingConfig best;
  std::vector<std::vector<double>> fold_scores;  // [candidate][fold], raw-scale MSE
  std::vector<double> mean_scores;
};

/// k contiguous blocks; each candidate trains on k - 1 blocks and is scored
/// on the held-out one. The lowest mean score wins; exact ties go to fewer
/// trees, then smaller depth, then smaller hidden size, then the earlier
/// candidate.
CrossValidationResult cross_validate(const SeriesFrame& frame,
                                     std::span<const TrainingConfig> grid, std::size_t k);

}  // namespace recboost
