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

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "recboost/error.hpp"
#include "recboost/eval.hpp"
#include "recboost/metrics.hpp"
#include "recboost/model.hpp"
#include "test_util.hpp"

namespace recboost {
namespace {

SeriesFrame series(const std::vector<double>& y) {
  SeriesFrame f;
  f.name = "s";
  f.target_name = "y";
  f.target = y;
  return f;
}

SeriesFrame random_walk(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> y{0.0};
  while (y.size() < n) y.push_back(y.back() + rng.normal());
  return series(y);
}

TrainingConfig small_config() {
  TrainingConfig c;
  c.hidden_dim = 3;
  c.window = 3;
  c.depth = 2;
  c.num_trees = 2;
  c.shrinkage = 0.5;
  c.learning_rate = 0.05;
  return c;
}

// A model whose output is exactly c: every leaf is zero and g0 = c.
HybridModel constant_model(double c, std::size_t window) {
  TrainingConfig config = small_config();
  config.window = window;
  Rng rng(1);
  HybridModel m = HybridModel::random(config, 1, rng);
  for (std::size_t j = 0; j < m.gbdt().num_trees(); ++j) {
    for (std::size_t l = 0; l < m.gbdt().tree(j).num_leaves(); ++l) {
      m.gbdt().tree(j).leaf(l) = Vec{0.0};
    }
  }
  m.gbdt().set_head(Vec{c});
  return m;
}

TEST_CASE("squared-error metrics") {
  CHECK(mse(Forecast(Vec{1, 2, 3}, Vec{1, 2, 3})) == 0.0);
  const Forecast f(Vec{0, 0}, Vec{1, 1});
  CHECK(mse(f) == 1.0);
  CHECK(rmse(f) == 1.0);
  Rng rng(3);
  Vec d(20);
  Vec p(20);
  for (std::size_t i = 0; i < 20; ++i) {
    d[i] = rng.normal();
    p[i] = rng.normal();
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < 20; ++i) sum += (d[i] - p[i]) * (d[i] - p[i]);
  CHECK(std::abs(mse(Forecast(d, p)) - sum / 20.0) <= 1e-15);
  CHECK(std::abs(rmse(Forecast(d, p)) - std::sqrt(sum / 20.0)) <= 1e-15);
  CHECK_THROWS(Forecast(Vec{1, 2}, Vec{1}));
}

TEST_CASE("percentage metrics") {
  CHECK(std::abs(mape(Forecast(Vec{100}, Vec{110})) - 0.1) <= 1e-12);
  CHECK(mape(Forecast(Vec{3, -4}, Vec{3, -4})) == 0.0);
  CHECK(std::abs(mape(Forecast(Vec{100, 200}, Vec{110, 180})) - 0.1) <= 1e-12);
  CHECK_THROWS_AS(mape(Forecast(Vec{0, 1}, Vec{1, 1})), DataError);

  CHECK(smape(Forecast(Vec{5, 6}, Vec{5, 6})) == 0.0);
  CHECK(std::abs(smape(Forecast(Vec{100}, Vec{50})) - 2.0 / 3.0) <= 1e-12);
  CHECK(smape(Forecast(Vec{100, 7}, Vec{50, 9})) == smape(Forecast(Vec{50, 9}, Vec{100, 7})));
  CHECK(smape(Forecast(Vec{1}, Vec{-1})) == 2.0);
  CHECK_THROWS_AS(smape(Forecast(Vec{0}, Vec{0})), DataError);
}

TEST_CASE("naive forecast") {
  const std::vector<double> h{1, 4, 7};
  CHECK(naive_forecast(h) == 7.0);
  CHECK(naive_forecast(h, 3) == Vec{7, 7, 7});
  CHECK_THROWS_AS(naive_forecast(std::vector<double>{}), DataError);
}

TEST_CASE("cumulative tracker") {
  CumulativeTracker t;
  const std::vector<std::pair<double, double>> pairs{{1, 2}, {0, 3}, {5, 5}, {-1, 1}};
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [truth, pred] : pairs) {
    t.add(truth, pred);
    sum += (truth - pred) * (truth - pred);
    ++n;
    CHECK(t.value() == sum / static_cast<double>(n));
  }
  CHECK(t.count() == 4);
}

TEST_CASE("online protocol with stub learners") {
  const SeriesFrame walk = random_walk(5, 200);
  SUBCASE("a perfect stub gives an all-zero curve") {
    std::size_t seen = 0;
    const StreamLearner perfect = [&seen](const Vec& row) -> std::optional<double> {
      return seen++ < 3 ? std::nullopt : std::optional<double>(row[0]);
    };
    const OnlineCurve curve = run_online_protocol(perfect, walk);
    CHECK(curve.step.size() == 200 - 3);
    for (double v : curve.cumulative) CHECK(v == 0.0);
  }
  SUBCASE("naive learner equals the direct loop") {
    for (std::size_t warmup : {1, 4}) {
      const OnlineCurve curve = run_online_protocol(naive_stream(warmup), walk);
      REQUIRE(curve.step.size() == walk.size() - warmup);
      double sum = 0.0;
      for (std::size_t t = warmup; t < walk.size(); ++t) {
        const double e = walk.target[t] - walk.target[t - 1];
        sum += e * e;
        const std::size_t i = t - warmup;
        CHECK(curve.step[i] == t);
        CHECK(curve.prediction[i] == walk.target[t - 1]);
        CHECK(curve.cumulative[i] == sum / static_cast<double>(i + 1));
      }
      CHECK(curve.final_value() >= 0.0);
    }
  }
  SUBCASE("a stream shorter than the warmup is an error") {
    CHECK_THROWS_AS(run_online_protocol(naive_stream(5), series({1, 2, 3})), DataError);
    CHECK_THROWS_AS(run_online_protocol(constant_model(0.0, 3), series({1, 2, 3}),
                                        small_config()),
                    DataError);
  }
  SUBCASE("curve csv") {
    const OnlineCurve curve = run_online_protocol(naive_stream(1), series({1, 3, 2}));
    std::ostringstream out;
    curve.write_csv(out);
    CHECK(out.str() == "step,prediction,truth,cumulative_mse\n1,1,3,4\n2,3,2,2.5\n");
  }
}

TEST_CASE("online protocol with the hybrid model") {
  const SeriesFrame walk = random_walk(6, 60);
  TrainingConfig config = small_config();
  Rng rng(2);
  const HybridModel model = HybridModel::random(config, 1, rng);
  const OnlineCurve curve = run_online_protocol(model, walk, config);
  CHECK(curve.step.size() == walk.size() - config.window);
  CHECK(curve.step.front() == config.window);
  const OnlineCurve again = run_online_protocol(model, walk, config);
  CHECK(curve.prediction == again.prediction);
}

TEST_CASE("offline protocol") {
  const SeriesFrame walk = random_walk(7, 40);
  SUBCASE("one step ahead with horizon 1 is a single forward per origin") {
    const HybridModel model = constant_model(0.0, 3);
    Rng rng(4);
    HybridModel random = HybridModel::random(small_config(), 1, rng);
    const OfflineResult r = run_offline_protocol(random, walk, 39, PredictMode::kOneStep, 1);
    REQUIRE(r.step.size() == 1);
    const std::vector<Vec> rows = walk.feature_rows();
    CHECK(r.prediction[0] ==
          forward(random, std::span<const Vec>(rows).subspan(36, 3)).prediction()[0]);
    CHECK(r.truth == Vec{walk.target[39]});
  }
  SUBCASE("a constant model gives hand-computable metrics") {
    const SeriesFrame s = series({1, 2, 3, 4, 6});
    const OfflineResult r = run_offline_protocol(constant_model(5.0, 2), s, 2,
                                                 PredictMode::kOneStep, 1);
    CHECK(r.step == std::vector<std::size_t>{2, 3, 4});
    CHECK(r.prediction == Vec{5, 5, 5});
    const Forecast f = *r.scored();
    CHECK(mse(f) == (4.0 + 1.0 + 1.0) / 3.0);
    CHECK(std::abs(mape(f) - (2.0 / 3.0 + 1.0 / 4.0 + 1.0 / 6.0) / 3.0) <= 1e-15);
    const OfflineResult rec = run_offline_protocol(constant_model(5.0, 2), s, 2,
                                                   PredictMode::kRecursive, 3);
    CHECK(rec.prediction == Vec{5, 5, 5});
  }
  SUBCASE("recursive forecasts past the end keep predictions without truth") {
    const OfflineResult r =
        run_offline_protocol(constant_model(1.0, 3), walk, 38, PredictMode::kRecursive, 48);
    CHECK(r.step.size() == 48);
    CHECK(r.prediction.size() == 48);
    CHECK(r.truth.size() == 2);
    CHECK(r.scored()->horizon() == 2);
  }
  SUBCASE("one-step and recursive differ once a prediction errs") {
    Rng rng(8);
    const HybridModel model = HybridModel::random(small_config(), 1, rng);
    const auto one = run_offline_protocol(model, walk, 20, PredictMode::kOneStep, 1);
    const auto rec = run_offline_protocol(model, walk, 20, PredictMode::kRecursive, 5);
    CHECK(one.prediction[0] == rec.prediction[0]);
    CHECK(one.prediction[1] != rec.prediction[1]);
  }
  SUBCASE("bad requests") {
    const HybridModel model = constant_model(0.0, 3);
    CHECK_THROWS_AS(run_offline_protocol(model, walk, 2, PredictMode::kOneStep, 1), DataError);
    CHECK_THROWS_AS(run_offline_protocol(model, walk, 41, PredictMode::kOneStep, 1), DataError);
    CHECK_THROWS_AS(run_offline_protocol(model, walk, 10, PredictMode::kOneStep, 2), UsageError);
  }
}

TEST_CASE("synthetic helpers") {
  CHECK(synthetic_config(SyntheticTask::kReplicate).window == 4);
  CHECK(synthetic_config(SyntheticTask::kIdentity).window == 1);
  TrainingConfig c = synthetic_config(SyntheticTask::kIdentity);
  c.epochs = 2;
  const SyntheticRun run = run_synthetic(SyntheticTask::kIdentity, 1, 100, c);
  CHECK(run.test_rmse.size() == 2);
  CHECK(run.target_std > 0.0);
  std::ostringstream out;
  run.write_csv(out);
  CHECK(out.str().rfind("epoch,train_loss,test_rmse\n0,,", 0) == 0);
  c.window = 3;
  CHECK_THROWS_AS(run_synthetic(SyntheticTask::kIdentity, 1, 100, c), UsageError);
}

TEST_CASE("ablation writes three variants") {
  TrainingConfig c = synthetic_config(SyntheticTask::kReplicate);
  c.epochs = 1;
  const auto rows = run_ablation(SyntheticTask::kReplicate, 1, 60, c);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].variant == "full");
  CHECK(rows[1].variant == "frozen_extractor");
  CHECK(rows[2].variant == "frozen_gbdt");
  std::ostringstream out;
  write_ablation_csv(out, rows);
  std::size_t lines = 0;
  for (char ch : out.str()) lines += ch == '\n';
  CHECK(lines == 4);
}

}  // namespace
}  // namespace recboost
