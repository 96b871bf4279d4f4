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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "recboost/error.hpp"
#include "recboost/eval.hpp"
#include "recboost/model.hpp"
#include "test_util.hpp"

namespace recboost {
namespace {

using testing::normal_vec;

TrainingConfig tiny_config(CellKind cell = CellKind::kLstm, Pooling pooling = Pooling::kLast) {
  TrainingConfig c;
  c.cell = cell;
  c.pooling = pooling;
  c.hidden_dim = 2;
  c.window = 2;
  c.depth = 1;
  c.num_trees = 1;
  c.shrinkage = 0.5;
  return c;
}

TrainingConfig small_config() {
  TrainingConfig c;
  c.hidden_dim = 3;
  c.window = 3;
  c.depth = 2;
  c.num_trees = 3;
  c.shrinkage = 0.3;
  c.learning_rate = 0.05;
  c.epochs = 3;
  return c;
}

// Random model with normal leaves and head so every gradient is visible.
HybridModel lively_model(const TrainingConfig& config, std::size_t input_dim,
                         std::uint64_t seed) {
  Rng rng(seed);
  HybridModel m = HybridModel::random(config, input_dim, rng);
  m.gbdt().set_head(normal_vec(rng, config.horizon));
  for (std::size_t j = 0; j < m.gbdt().num_trees(); ++j) {
    for (std::size_t l = 0; l < m.gbdt().tree(j).num_leaves(); ++l) {
      m.gbdt().tree(j).leaf(l) = normal_vec(rng, config.horizon);
    }
  }
  return m;
}

std::vector<Vec> random_window(Rng& rng, std::size_t steps, std::size_t dim) {
  std::vector<Vec> w;
  for (std::size_t t = 0; t < steps; ++t) w.push_back(normal_vec(rng, dim));
  return w;
}

SeriesFrame sine_series(std::size_t n, double noise, std::uint64_t seed) {
  Rng rng(seed);
  SeriesFrame f;
  f.name = "sine";
  f.target_name = "y";
  for (std::size_t t = 0; t < n; ++t) {
    f.target.push_back(3.0 + 2.0 * std::sin(0.3 * static_cast<double>(t)) + noise * rng.normal());
  }
  return f;
}

std::vector<double> flat_parameters(HybridModel& m) {
  std::vector<double> out;
  for (const auto& b : parameter_blocks(m)) out.insert(out.end(), b.values.begin(), b.values.end());
  return out;
}

TEST_CASE("config validation") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    TrainingConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.hidden_dim = 0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.depth = 0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.shrinkage = 0.0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.shrinkage = 1.5; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.learning_rate = -1.0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.epochs = 0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.online_steps = 0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.clip_norm = 0.0; }).validate(), UsageError);
  CHECK_THROWS_AS(bad([](TrainingConfig& c) { c.window = 0; }).validate(), UsageError);
}

TEST_CASE("forward") {
  Rng rng(1);
  SUBCASE("zero extractor and zero leaves predict the head") {
    HybridModel m = HybridModel(
        RecurrentStack({RecurrentParams::zeros(CellKind::kLstm, 2, 3)}), Pooling::kMean,
        SoftGBDT(4, Vec{0.75}, {SoftTree(2, 4, 1), SoftTree(2, 4, 1)}, 0.1), 3, 2);
    CHECK(forward(m, random_window(rng, 3, 2)).prediction() == Vec{0.75});
  }
  SUBCASE("zero shrinkage ignores the extractor") {
    HybridModel m = lively_model(small_config(), 2, 3);
    const HybridModel muted(m.extractor(), m.pooling(),
                            SoftGBDT(m.gbdt().input_dim(), m.gbdt().head(), m.gbdt().trees(), 0.0),
                            m.window(), m.depth());
    CHECK(forward(muted, random_window(rng, 3, 2)).prediction() == m.gbdt().head());
  }
  SUBCASE("equals the module forwards called by hand") {
    for (const auto pooling : {Pooling::kLast, Pooling::kMean, Pooling::kMax}) {
      TrainingConfig c = small_config();
      c.pooling = pooling;
      c.layers = 2;
      const HybridModel m = lively_model(c, 2, 4);
      const auto window = random_window(rng, 3, 2);
      const auto hiddens = forward_sequence(m.extractor(), window).top_hiddens();
      const Vec h_aug = augment(pool(hiddens, pooling).value);
      CHECK(forward(m, window).prediction() == gbdt_forward(m.gbdt(), h_aug).prediction);
    }
  }
  SUBCASE("window shape is checked") {
    const HybridModel m = lively_model(small_config(), 2, 5);
    CHECK_THROWS_AS(forward(m, random_window(rng, 2, 2)), ShapeError);
    CHECK_THROWS_AS(forward(m, random_window(rng, 3, 1)), ShapeError);
  }
}

double max_abs(const GradientSet& g) {
  double worst = 0.0;
  for (const auto& layer : g.extractor) {
    for (const auto& w : layer.gate_weights) {
      for (double v : w.span()) worst = std::max(worst, std::abs(v));
    }
    for (const auto& b : layer.gate_biases) {
      for (double v : b) worst = std::max(worst, std::abs(v));
    }
  }
  for (const auto* part : {&g.leaves, &g.hyperplanes}) {
    for (const auto& tree : *part) {
      for (const auto& v : tree) {
        for (double x : v) worst = std::max(worst, std::abs(x));
      }
    }
  }
  return worst;
}

TEST_CASE("backward") {
  Rng rng(2);
  SUBCASE("every entry matches plain central differences of E") {
    HybridModel m = lively_model(tiny_config(), 2, 7);
    const auto window = random_window(rng, 2, 2);
    const Vec y{0.4};
    ForwardTrace trace = forward(m, window);
    GradientSet g = backward(m, trace, y);
    const auto params = parameter_blocks(m);
    const auto grads = gradient_blocks(m, g);
    REQUIRE(params.size() == grads.size());
    double worst = 0.0;
    for (std::size_t b = 0; b < params.size(); ++b) {
      CHECK(params[b].path == grads[b].path);
      worst = std::max(worst, testing::worst_fd_error(params[b].values, grads[b].values, [&] {
                         return total_loss(m, window, y);
                       }));
    }
    CHECK(worst <= 1e-5);
  }
  SUBCASE("freezing both components gives zero gradients") {
    HybridModel m = lively_model(small_config(), 2, 8);
    m.set_extractor_frozen(true);
    m.set_gbdt_frozen(true);
    ForwardTrace trace = forward(m, random_window(rng, 3, 2));
    CHECK(max_abs(backward(m, trace, Vec{1.0})) == 0.0);
  }
  SUBCASE("a frozen extractor only masks its own gradients") {
    HybridModel m = lively_model(small_config(), 2, 9);
    const auto window = random_window(rng, 3, 2);
    ForwardTrace t1 = forward(m, window);
    const GradientSet full = backward(m, t1, Vec{1.0});
    m.set_extractor_frozen(true);
    ForwardTrace t2 = forward(m, window);
    const GradientSet masked = backward(m, t2, Vec{1.0});
    CHECK(masked.leaves == full.leaves);
    CHECK(masked.hyperplanes == full.hyperplanes);
    GradientSet only_extractor = masked;
    only_extractor.leaves.clear();
    only_extractor.hyperplanes.clear();
    CHECK(max_abs(only_extractor) == 0.0);
    m.set_extractor_frozen(false);
    m.set_gbdt_frozen(true);
    ForwardTrace t3 = forward(m, window);
    const GradientSet gbdt_masked = backward(m, t3, Vec{1.0});
    for (std::size_t l = 0; l < full.extractor.size(); ++l) {
      CHECK(gbdt_masked.extractor[l].gate_weights == full.extractor[l].gate_weights);
    }
  }
}

TEST_CASE("sgd_step") {
  HybridModel m = lively_model(small_config(), 2, 10);
  const auto before = flat_parameters(m);
  SUBCASE("zero gradients leave the model unchanged") {
    sgd_step(m, GradientSet::zeros_like(m), 0.1);
    CHECK(flat_parameters(m) == before);
  }
  SUBCASE("zero learning rate leaves the model unchanged") {
    Rng rng(3);
    ForwardTrace trace = forward(m, random_window(rng, 3, 2));
    sgd_step(m, backward(m, trace, Vec{2.0}), 0.0);
    CHECK(flat_parameters(m) == before);
  }
  SUBCASE("each entry moves by exactly -lr * g") {
    GradientSet g = GradientSet::zeros_like(m);
    g.leaves[1][2][0] = 0.75;
    g.extractor[0].gate_weights[1](0, 1) = -2.0;
    const double leaf = m.gbdt().tree(1).leaf(2)[0];
    const double w = m.extractor().layer(0).gate_weights[1](0, 1);
    sgd_step(m, g, 0.1);
    CHECK(m.gbdt().tree(1).leaf(2)[0] == leaf - 0.1 * 0.75);
    CHECK(m.extractor().layer(0).gate_weights[1](0, 1) == w - 0.1 * -2.0);
  }
  SUBCASE("frozen components do not move") {
    GradientSet g = GradientSet::zeros_like(m);
    for (auto& tree : g.leaves) {
      for (auto& leaf : tree) leaf.fill(1.0);
    }
    m.set_gbdt_frozen(true);
    sgd_step(m, g, 0.1);
    CHECK(flat_parameters(m) == before);
  }
  SUBCASE("clipping bounds the update norm") {
    GradientSet g = GradientSet::zeros_like(m);
    g.leaves[0][0][0] = 30.0;
    g.leaves[0][1][0] = 40.0;
    const double a = m.gbdt().tree(0).leaf(0)[0];
    const double b = m.gbdt().tree(0).leaf(1)[0];
    sgd_step(m, g, 1.0, 5.0);
    CHECK(m.gbdt().tree(0).leaf(0)[0] == doctest::Approx(a - 3.0));
    CHECK(m.gbdt().tree(0).leaf(1)[0] == doctest::Approx(b - 4.0));
  }
  SUBCASE("non-finite gradients are rejected by name") {
    GradientSet g = GradientSet::zeros_like(m);
    g.hyperplanes[2][1][0] = std::numeric_limits<double>::quiet_NaN();
    try {
      sgd_step(m, g, 0.1);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("gbdt.tree2.node1") != std::string::npos);
    }
    CHECK(flat_parameters(m) == before);
  }
}

TEST_CASE("parameter blocks") {
  HybridModel m = lively_model(small_config(), 2, 11);
  const auto blocks = parameter_blocks(m);
  std::set<std::string> paths;
  std::size_t total = 0;
  for (const auto& b : blocks) {
    paths.insert(b.path);
    total += b.values.size();
  }
  CHECK(paths.size() == blocks.size());
  CHECK(blocks.front().path.rfind("lstm.layer0.W_f", 0) == 0);
  // 4 gates of 3 x (3 + 2) weights and 3 biases, then 3 trees of 3 nodes x 4 and 4 leaves.
  CHECK(total == 4 * (15 + 3) + 3 * (3 * 4 + 4));
  const auto checksum = parameter_checksum(m);
  m.gbdt().tree(0).leaf(0)[0] += 1e-12;
  CHECK(parameter_checksum(m) != checksum);
}

TEST_CASE("train_offline") {
  SUBCASE("one small step lowers the loss on its window") {
    HybridModel m = lively_model(small_config(), 1, 12);
    Rng rng(4);
    const Window w{random_window(rng, 3, 1), Vec{1.5}, 2};
    const double before = total_loss(m, w.inputs, w.target);
    TrainingConfig c = small_config();
    c.epochs = 1;
    c.learning_rate = 1e-3;
    const auto report = train_offline(m, std::vector<Window>{w}, c);
    CHECK(report.train_loss.size() == 1);
    CHECK(total_loss(m, w.inputs, w.target) < before);
  }
  SUBCASE("identical seeds give identical reports") {
    const SeriesFrame s = sine_series(80, 0.1, 2);
    const auto a = fit_series(std::vector<SeriesFrame>{s}, small_config());
    const auto b = fit_series(std::vector<SeriesFrame>{s}, small_config());
    std::ostringstream ca;
    std::ostringstream cb;
    a.report.write_csv(ca);
    b.report.write_csv(cb);
    CHECK(ca.str() == cb.str());
    CHECK(ca.str().rfind("epoch,train_loss,eval_rmse\n1,", 0) == 0);
    CHECK(a.report.checksum == parameter_checksum(a.model));
  }
  SUBCASE("training reduces error on a learnable series") {
    TrainingConfig c = small_config();
    c.epochs = 30;
    const SeriesFrame s = sine_series(200, 0.05, 3);
    const auto fitted = fit_series(std::vector<SeriesFrame>{s}, c);
    CHECK(fitted.report.eval_metric.back() < 0.5 * fitted.report.eval_metric.front());
  }
}

TEST_CASE("predict_recursive") {
  TrainingConfig c = small_config();
  const HybridModel m = lively_model(c, 1, 13);
  Rng rng(5);
  const auto seed_window = random_window(rng, 3, 1);
  CHECK(predict_recursive(m, seed_window, 1) == forward(m, seed_window).prediction());

  std::vector<Vec> w = seed_window;
  Vec manual(3);
  for (std::size_t h = 0; h < 3; ++h) {
    manual[h] = forward(m, w).prediction()[0];
    w = {w[1], w[2], Vec{manual[h]}};
  }
  CHECK(predict_recursive(m, seed_window, 3) == manual);

  HybridModel constant = m;
  for (std::size_t j = 0; j < constant.gbdt().num_trees(); ++j) {
    for (std::size_t l = 0; l < constant.gbdt().tree(j).num_leaves(); ++l) {
      constant.gbdt().tree(j).leaf(l) = Vec{0.0};
    }
  }
  constant.gbdt().set_head(Vec{2.5});
  CHECK(predict_recursive(constant, seed_window, 4) == Vec{2.5, 2.5, 2.5, 2.5});

  CHECK_THROWS_AS(predict_recursive(lively_model(c, 2, 1), random_window(rng, 3, 2), 2),
                  UsageError);
}

TEST_CASE("online forecaster") {
  SUBCASE("zero learning rate keeps the parameters") {
    TrainingConfig c = small_config();
    c.learning_rate = 0.0;
    HybridModel m = lively_model(c, 1, 14);
    OnlineForecaster f(m, c);
    const SeriesFrame s = sine_series(30, 0.1, 4);
    for (std::size_t t = 0; t < s.size(); ++t) (void)f.observe(s.features(t));
    HybridModel after = f.model();
    HybridModel original = m;
    // Only the head changes, once, when the warmup ends.
    after.gbdt().set_head(original.gbdt().head());
    CHECK(flat_parameters(after) == flat_parameters(original));
  }
  SUBCASE("predictions arrive only after the warmup") {
    TrainingConfig c = small_config();
    OnlineForecaster f(lively_model(c, 1, 15), c);
    CHECK_THROWS_AS(f.predict_next(), DataError);
    CHECK_FALSE(f.observe(Vec{1.0}).has_value());
    CHECK_FALSE(f.observe(Vec{2.0}).has_value());
    CHECK_FALSE(f.observe(Vec{3.0}).has_value());
    CHECK(f.ready());
    const double next = f.predict_next();
    CHECK(f.observe(Vec{4.0}) == next);
  }
  SUBCASE("a constant series is learned") {
    TrainingConfig c = small_config();
    c.learning_rate = 0.05;
    SeriesFrame s;
    s.target.assign(300, 4.0);
    const OnlineCurve curve = run_online_protocol(lively_model(c, 1, 16), s, c);
    CHECK(curve.cumulative.back() <= curve.cumulative.front());
    CHECK(std::abs(curve.prediction.back() - 4.0) < std::abs(curve.prediction.front() - 4.0) +
                                                         1e-12);
  }
  SUBCASE("multi-output models are rejected") {
    TrainingConfig c = small_config();
    c.horizon = 2;
    CHECK_THROWS_AS(OnlineForecaster(lively_model(c, 1, 17), c), UsageError);
  }
}

TEST_CASE("grad_check") {
  Rng rng(6);
  SUBCASE("all-frozen model passes vacuously") {
    HybridModel m = lively_model(small_config(), 2, 18);
    m.set_extractor_frozen(true);
    m.set_gbdt_frozen(true);
    const auto report = grad_check(m, random_window(rng, 3, 2), Vec{1.0}, 1e-6, 1e-5);
    CHECK(report.passed);
    CHECK(report.groups.empty());
  }
  for (const auto cell : {CellKind::kLstm, CellKind::kGru}) {
    for (const auto pooling : {Pooling::kLast, Pooling::kMean, Pooling::kMax}) {
      CAPTURE(to_string(cell));
      CAPTURE(to_string(pooling));
      TrainingConfig c = small_config();
      c.cell = cell;
      c.pooling = pooling;
      c.horizon = 2;
      const HybridModel m = lively_model(c, 2, 19);
      const auto report = grad_check(m, random_window(rng, 3, 2), normal_vec(rng, 2), 1e-6, 1e-5);
      CHECK(report.passed);
      CHECK(report.max_rel_error <= 1e-5);
      CHECK(report.groups.size() == 2 * gate_count(cell) + 2);
    }
  }
  SUBCASE("the opposite branch-derivative sign is caught") {
    // With d pp_l / d a_m = pp_l (p_m - 1[l in LD(m)]) every hyperplane
    // gradient, and everything upstream of the trees, changes sign.
    const HybridModel m = lively_model(small_config(), 2, 20);
    const auto window = random_window(rng, 3, 2);
    ForwardTrace trace = forward(m, window);
    GradientSet mutated = backward(m, trace, Vec{0.9});
    for (auto& tree : mutated.hyperplanes) {
      for (auto& w : tree) w = scale(w, -1.0);
    }
    const auto report = compare_gradients(m, window, Vec{0.9}, 1e-6, 1e-5, mutated);
    CHECK_FALSE(report.passed);
    CHECK(report.max_rel_error > 0.5);
  }
  SUBCASE("step range") {
    const HybridModel m = lively_model(small_config(), 2, 21);
    CHECK_THROWS_AS(grad_check(m, random_window(rng, 3, 2), Vec{1.0}, 1e-2, 1e-5), UsageError);
  }
}

TEST_CASE("gradient check sweep") {
  GradCheckMatrix matrix;
  matrix.seeds = 2;
  matrix.depths = {1, 2};
  const GradCheckSweep sweep = run_gradcheck_matrix(matrix);
  CHECK(sweep.cases == 2 * 3 * 2 * 2 * 2);
  CHECK(sweep.failed_cases == 0);
  CHECK(sweep.report.passed);
  std::set<std::string> names;
  for (const auto& g : sweep.report.groups) CHECK(names.insert(g.name).second);
  CHECK(names.size() == 16);
}

TEST_CASE("save and load") {
  TrainingConfig c = small_config();
  c.cell = CellKind::kGru;
  c.pooling = Pooling::kMax;
  c.layers = 2;
  c.horizon = 2;
  HybridModel m = lively_model(c, 2, 22);
  Rng rng(7);
  std::vector<Vec> rows;
  for (int i = 0; i < 20; ++i) rows.push_back(normal_vec(rng, 2));
  m.set_scaler(Scaler::fit(rows));
  m.set_gbdt_frozen(true);

  std::stringstream buffer;
  save(m, buffer);
  const std::string text = buffer.str();
  HybridModel loaded = load(buffer);
  CHECK(parameter_checksum(loaded) == parameter_checksum(m));
  CHECK(loaded.gbdt_frozen());
  CHECK_FALSE(loaded.extractor_frozen());
  CHECK(loaded.pooling() == Pooling::kMax);
  CHECK(loaded.extractor().kind() == CellKind::kGru);
  CHECK(loaded.gbdt().head() == m.gbdt().head());
  CHECK(loaded.scaler()->mean() == m.scaler()->mean());
  CHECK(loaded.scaler()->m2() == m.scaler()->m2());
  for (int i = 0; i < 10; ++i) {
    const auto window = random_window(rng, 3, 2);
    CHECK(predict(loaded, window) == predict(m, window));
  }
  std::ostringstream again;
  save(loaded, again);
  CHECK(again.str() == text);

  std::istringstream truncated(text.substr(0, text.size() / 2));
  try {
    (void)load(truncated, "half.model");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("half.model") != std::string::npos);
  }
  std::istringstream garbage("not a model\n");
  CHECK_THROWS_AS(load(garbage), DataError);
  CHECK_THROWS_AS(load(std::string("/nonexistent/model.txt")), DataError);
}

TEST_CASE("cross_validate") {
  const SeriesFrame s = sine_series(90, 0.1, 5);
  TrainingConfig c = small_config();
  c.epochs = 2;
  SUBCASE("a single candidate is returned") {
    const std::vector<TrainingConfig> grid{c};
    const auto r = cross_validate(s, grid, 3);
    CHECK(r.best_index == 0);
    CHECK(r.fold_scores.size() == 1);
    CHECK(r.fold_scores[0].size() == 3);
  }
  SUBCASE("duplicates resolve to the first") {
    const std::vector<TrainingConfig> grid{c, c, c};
    const auto r = cross_validate(s, grid, 3);
    CHECK(r.mean_scores[0] == r.mean_scores[2]);
    CHECK(r.best_index == 0);
  }
  SUBCASE("the window matching the generating lag wins") {
    // y_t = -0.8 y_{t-2} + e_t has no lag-1 correlation, so a window of one
    // step cannot see the signal and a window of two can.
    std::size_t wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng(1000 + seed);
      SeriesFrame f;
      double prev = 0.0;
      double prev2 = 0.0;
      for (int t = 0; t < 350; ++t) {
        const double y = -0.8 * prev2 + rng.normal();
        prev2 = prev;
        prev = y;
        if (t >= 50) f.target.push_back(y);
      }
      TrainingConfig generating;
      generating.window = 2;
      generating.hidden_dim = 4;
      generating.depth = 2;
      generating.num_trees = 3;
      generating.shrinkage = 0.5;
      generating.learning_rate = 0.05;
      generating.epochs = 20;
      generating.seed = seed;
      TrainingConfig short_window = generating;
      short_window.window = 1;
      const std::vector<TrainingConfig> grid{short_window, generating};
      wins += cross_validate(f, grid, 3).best_index == 1;
    }
    CHECK(wins >= 4);
  }
  SUBCASE("bad arguments") {
    const std::vector<TrainingConfig> grid{c};
    CHECK_THROWS_AS(cross_validate(s, grid, 1), UsageError);
    CHECK_THROWS_AS(cross_validate(s, grid, 40), DataError);
  }
}

}  // namespace
}  // namespace recboost
