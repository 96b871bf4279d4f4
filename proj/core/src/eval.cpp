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

#include "recboost/eval.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

#include "recboost/error.hpp"

namespace recboost {

StreamLearner naive_stream(std::size_t warmup) {
  struct State {
    std::size_t seen = 0;
    double last = 0.0;
  };
  auto state = std::make_shared<State>();
  return [state, warmup](const Vec& raw_row) -> std::optional<double> {
    std::optional<double> out;
    if (state->seen >= warmup && state->seen > 0) out = state->last;
    state->last = raw_row[0];
    ++state->seen;
    return out;
  };
}

double OnlineCurve::final_value() const {
  if (cumulative.empty()) throw DataError("online curve is empty");
  return cumulative.back();
}

void OnlineCurve::write_csv(std::ostream& out) const {
  out << "step,prediction,truth,cumulative_mse\n";
  for (std::size_t i = 0; i < step.size(); ++i) {
    out << step[i] << ',' << format_real(prediction[i]) << ',' << format_real(truth[i]) << ','
        << format_real(cumulative[i]) << '\n';
  }
}

OnlineCurve run_online_protocol(const StreamLearner& learner, const SeriesFrame& frame) {
  OnlineCurve curve;
  CumulativeTracker tracker;
  for (std::size_t t = 0; t < frame.size(); ++t) {
    const Vec row = frame.features(t);
    const std::optional<double> pred = learner(row);
    if (!pred) continue;
    tracker.add(row[0], *pred);
    curve.step.push_back(t);
    curve.prediction.push_back(*pred);
    curve.truth.push_back(row[0]);
    curve.cumulative.push_back(tracker.value());
  }
  if (curve.step.empty()) {
    throw DataError("stream of " + std::to_string(frame.size()) +
                    " points is too short to produce a prediction");
  }
  return curve;
}

OnlineCurve run_online_protocol(const HybridModel& model, const SeriesFrame& frame,
                                const TrainingConfig& config) {
  if (frame.size() <= model.window()) {
    throw DataError("online stream needs more than " + std::to_string(model.window()) +
                    " points, got " + std::to_string(frame.size()));
  }
  auto forecaster = std::make_shared<OnlineForecaster>(model, config);
  return run_online_protocol(
      [forecaster](const Vec& row) { return forecaster->observe(row); }, frame);
}

std::optional<Forecast> OfflineResult::scored() const {
  if (truth.empty()) return std::nullopt;
  return Forecast(truth,
                  Vec(std::vector<double>(prediction.begin(), prediction.begin() +
                                                              static_cast<std::ptrdiff_t>(
                                                                  truth.size()))));
}

OfflineResult run_offline_protocol(const HybridModel& model, const SeriesFrame& series,
                                   std::size_t test_begin, PredictMode mode,
                                   std::size_t horizon) {
  const std::size_t window = model.window();
  if (test_begin < window) {
    throw DataError("prediction start " + std::to_string(test_begin) + " leaves fewer than " +
                    std::to_string(window) + " past observations");
  }
  if (test_begin > series.size()) {
    throw DataError("prediction start " + std::to_string(test_begin) +
                    " lies beyond the series end " + std::to_string(series.size()));
  }
  const std::vector<Vec> rows = series.feature_rows();
  OfflineResult result;
  if (mode == PredictMode::kRecursive) {
    result.prediction = predict_recursive(
        model, std::span<const Vec>(rows).subspan(test_begin - window, window), horizon);
    const std::size_t observed = std::min(horizon, series.size() - test_begin);
    result.truth = Vec(std::vector<double>(
        series.target.begin() + static_cast<std::ptrdiff_t>(test_begin),
        series.target.begin() + static_cast<std::ptrdiff_t>(test_begin + observed)));
    for (std::size_t h = 0; h < horizon; ++h) result.step.push_back(test_begin + h);
    return result;
  }
  const std::size_t h_model = model.horizon();
  if (horizon != h_model) {
    throw UsageError("one-step mode uses the model horizon " + std::to_string(h_model) +
                     ", requested " + std::to_string(horizon));
  }
  if (test_begin + h_model > series.size()) {
    throw DataError("no complete target after prediction start " + std::to_string(test_begin));
  }
  std::vector<double> pred;
  std::vector<double> truth;
  for (std::size_t t = test_begin; t + h_model <= series.size(); ++t) {
    const Vec p = predict(model, std::span<const Vec>(rows).subspan(t - window, window));
    for (std::size_t h = 0; h < h_model; ++h) {
      result.step.push_back(t + h);
      pred.push_back(p[h]);
      truth.push_back(series.target[t + h]);
    }
  }
  result.prediction = Vec(std::move(pred));
  result.truth = Vec(std::move(truth));
  return result;
}

void SyntheticRun::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,test_rmse\n";
  out << "0,," << format_real(initial_rmse) << '\n';
  for (std::size_t e = 0; e < test_rmse.size(); ++e) {
    out << (e + 1) << ',' << format_real(train_loss[e]) << ',' << format_real(test_rmse[e])
        << '\n';
  }
}

TrainingConfig synthetic_config(SyntheticTask task) {
  TrainingConfig c;
  c.cell = CellKind::kLstm;
  c.pooling = Pooling::kLast;
  c.hidden_dim = 16;
  c.layers = 1;
  c.window = task == SyntheticTask::kReplicate ? SyntheticSpec{}.window : 1;
  c.horizon = 1;
  c.depth = 2;
  c.num_trees = 8;
  c.shrinkage = 1.0;
  c.learning_rate = 0.003;
  c.epochs = 100;
  c.seed = 1;
  return c;
}

namespace {

double population_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

SyntheticRun run_synthetic(SyntheticTask task, std::uint64_t data_seed, std::size_t n,
                           const TrainingConfig& config, bool freeze_extractor,
                           bool freeze_gbdt) {
  config.validate();
  if (n < 5) throw UsageError("synthetic tasks need at least 5 samples");
  if (config.horizon != 1) throw UsageError("synthetic tasks have a scalar target");
  const SyntheticSpec spec;
  std::vector<Window> data;
  switch (task) {
    case SyntheticTask::kReplicate:
      data = gen_replicate(data_seed, n, spec);
      break;
    case SyntheticTask::kIdentity:
      data = gen_identity(data_seed, n, spec);
      break;
    case SyntheticTask::kInverse:
      data = gen_inverse(data_seed, n, random_mixing(data_seed + 1, spec.hidden_dim), spec);
      break;
  }
  const std::size_t window = data.front().inputs.size();
  if (config.window != window) {
    throw UsageError("the " + std::string(to_string(task)) + " task uses window " +
                     std::to_string(window) + ", config has " + std::to_string(config.window));
  }
  auto [train, test] = split_chronological(data, 0.8);

  std::vector<Vec> train_targets;
  for (const Window& w : train) train_targets.push_back(w.target);
  const Scaler target_scaler = Scaler::fit(train_targets);
  const double mu = target_scaler.mean()[0];
  const double sd = target_scaler.stddev()[0];
  auto standardize = [&](std::vector<Window>& windows) {
    for (Window& w : windows) w.target[0] = (w.target[0] - mu) / sd;
  };
  std::vector<double> test_raw;
  for (const Window& w : test) test_raw.push_back(w.target[0]);
  standardize(train);
  standardize(test);

  Rng rng(config.seed);
  HybridModel model = HybridModel::random(config, data.front().inputs.front().size(), rng);
  std::vector<Vec> standardized;
  for (const Window& w : train) standardized.push_back(w.target);
  model.gbdt().set_head(init_head(standardized));
  model.set_extractor_frozen(freeze_extractor);
  model.set_gbdt_frozen(freeze_gbdt);

  auto raw_rmse = [&] {
    double acc = 0.0;
    for (const Window& w : test) {
      const double e = (forward(model, w.inputs).prediction()[0] - w.target[0]) * sd;
      acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(test.size()));
  };
  SyntheticRun run;
  run.target_std = population_std(test_raw);
  run.initial_rmse = raw_rmse();
  const TrainReport report = train_offline(model, train, config, test);
  run.train_loss = report.train_loss;
  for (double r : report.eval_metric) run.test_rmse.push_back(r * sd);
  run.seconds = report.seconds;
  run.checksum = report.checksum;
  return run;
}

std::vector<AblationRow> run_ablation(SyntheticTask task, std::uint64_t data_seed, std::size_t n,
                                      const TrainingConfig& config) {
  std::vector<AblationRow> rows;
  const SyntheticRun full = run_synthetic(task, data_seed, n, config);
  rows.push_back({"full", full.final_rmse(), full.seconds});
  const SyntheticRun fe = run_synthetic(task, data_seed, n, config, true, false);
  rows.push_back({"frozen_extractor", fe.final_rmse(), fe.seconds});
  const SyntheticRun fg = run_synthetic(task, data_seed, n, config, false, true);
  rows.push_back({"frozen_gbdt", fg.final_rmse(), fg.seconds});
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,test_rmse,seconds\n";
  for (const AblationRow& r : rows) {
    out << r.variant << ',' << format_real(r.test_rmse) << ',' << format_real(r.seconds) << '\n';
  }
}

GradCheckSweep run_gradcheck_matrix(const GradCheckMatrix& matrix) {
  if (matrix.seeds == 0) throw UsageError("gradient check needs at least one seed");
  GradCheckSweep sweep;
  for (CellKind cell : matrix.cells) {
    for (Pooling pooling : matrix.poolings) {
      for (std::size_t depth : matrix.depths) {
        for (std::size_t trees : matrix.tree_counts) {
          TrainingConfig c;
          c.cell = cell;
          c.pooling = pooling;
          c.depth = depth;
          c.num_trees = trees;
          c.hidden_dim = matrix.hidden_dim;
          c.layers = matrix.layers;
          c.window = matrix.window;
          c.horizon = matrix.horizon;
          c.shrinkage = matrix.shrinkage;
          for (std::size_t s = 0; s < matrix.seeds; ++s) {
            Rng rng(matrix.first_seed + s);
            HybridModel model = HybridModel::random(c, matrix.input_dim, rng);
            Vec head(matrix.horizon);
            for (double& v : head) v = rng.normal();
            model.gbdt().set_head(head);
            std::vector<Vec> window;
            for (std::size_t t = 0; t < matrix.window; ++t) {
              Vec row(matrix.input_dim);
              for (double& v : row) v = rng.normal();
              window.push_back(row);
            }
            Vec y(matrix.horizon);
            for (double& v : y) v = rng.normal();
            const GradCheckReport r = grad_check(model, window, y, matrix.eps, matrix.tol);
            if (sweep.cases == 0) {
              sweep.report = r;
            } else {
              merge_report(sweep.report, r);
            }
            ++sweep.cases;
            if (!r.passed) ++sweep.failed_cases;
          }
        }
      }
    }
  }
  return sweep;
}

}  // namespace recboost
