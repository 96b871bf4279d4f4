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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "pinned.hpp"
#include "recboost/boosting.hpp"
#include "recboost/data.hpp"
#include "recboost/eval.hpp"
#include "recboost/metrics.hpp"
#include "recboost/model.hpp"
#include "recboost/recurrent.hpp"
#include "recboost/softtree.hpp"

namespace recboost {
namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

std::string printed(const std::string& out, const std::string& key) {
  std::stringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  }
  return {};
}

// 1. Full gradient-check matrix through the CLI at its defaults.
Outcome gradient_correctness() {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run_cli({"gradcheck", "--eps", "1e-6", "--tol", "1e-5"}, out, err);
  std::set<std::string> groups;
  bool duplicate = false;
  std::stringstream table(out.str());
  std::string line;
  while (std::getline(table, line)) {
    if (line.find(".layer") != std::string::npos || line.rfind("gbdt.", 0) == 0) {
      duplicate |= !groups.insert(line.substr(0, line.find(','))).second;
    }
  }
  const std::string cases = printed(out.str(), "cases");
  Outcome o;
  o.passed = code == 0 && cases == "1800" && groups.size() == 16 && !duplicate;
  o.detail = "exit=" + std::to_string(code) + " cases=" + cases +
             " failed=" + printed(out.str(), "failed_cases") +
             " max_rel_error=" + printed(out.str(), "max_rel_error") + " tol=1e-05 groups=" +
             std::to_string(groups.size());
  if (!err.str().empty()) o.detail += " stderr: " + err.str();
  return o;
}

// 2. Sum of path probabilities over random trees and inputs.
Outcome path_normalization() {
  Rng rng(2024);
  double worst = 0.0;
  std::size_t pairs = 0;
  for (std::size_t depth = 1; depth <= 4; ++depth) {
    for (int i = 0; i < 2500; ++i) {
      const std::size_t q = 1 + rng.index(8);
      SoftTree tree = SoftTree::random(depth, q + 1, 1, rng);
      const double spread = std::pow(10.0, rng.uniform(-1.0, 1.5));
      for (std::size_t m = 0; m < tree.num_internal(); ++m) {
        for (auto& w : tree.hyperplane(m)) w = spread * rng.normal();
      }
      Vec h(q);
      for (auto& v : h) v = spread * rng.normal();
      double total = 0.0;
      for (double pp : route(tree, augment(h)).path_prob) total += pp;
      worst = std::max(worst, std::abs(total - 1.0));
      ++pairs;
    }
  }
  return {worst <= 1e-12,
          "pairs=" + std::to_string(pairs) + " max|sum-1|=" + fmt("%.3g", worst) + " tol=1e-12"};
}

// 3. Synthetic integrity tasks at the pinned seeds.
Outcome architecture_verification() {
  Outcome o;
  const auto seed = pinned::kSyntheticDataSeed;
  const auto n = pinned::kSyntheticSamples;
  for (const auto task : {SyntheticTask::kReplicate, SyntheticTask::kIdentity}) {
    const SyntheticRun run = run_synthetic(task, seed, n, synthetic_config(task));
    const double ratio = run.final_rmse() / run.target_std;
    const double limit = task == SyntheticTask::kReplicate ? pinned::kReplicateRmseOverStd
                                                           : pinned::kIdentityRmseOverStd;
    o.passed &= ratio < limit;
    o.detail += std::string(to_string(task)) + " rmse/std=" + fmt("%.4f", ratio) + " (<" +
                fmt("%g", limit) + ") ";
  }
  const SyntheticRun inv =
      run_synthetic(SyntheticTask::kInverse, seed, n, synthetic_config(SyntheticTask::kInverse));
  const double ratio = inv.final_rmse() / inv.initial_rmse;
  o.passed &= ratio < pinned::kInverseFinalOverInitial;
  o.detail += "inverse final/initial=" + fmt("%.4f", ratio) + " (<" +
              fmt("%g", pinned::kInverseFinalOverInitial) + ")";
  return o;
}

// 4. Ablation direction on the replicate task. Metric per seed; wall-clock
// compared on the totals over all seeds.
Outcome ablation_direction() {
  Outcome o;
  double time_full = 0.0;
  double time_frozen_extractor = 0.0;
  double time_frozen_gbdt = 0.0;
  std::size_t metric_wins = 0;
  for (std::size_t s = 0; s < pinned::kAblationSeeds; ++s) {
    TrainingConfig config = synthetic_config(SyntheticTask::kReplicate);
    config.seed = pinned::kAblationModelSeedBase + s;
    const auto rows = run_ablation(SyntheticTask::kReplicate, pinned::kSyntheticDataSeed + s,
                                   pinned::kSyntheticSamples, config);
    const bool better = rows[0].test_rmse < rows[1].test_rmse &&
                        rows[0].test_rmse < rows[2].test_rmse;
    metric_wins += better;
    time_full += rows[0].seconds;
    time_frozen_extractor += rows[1].seconds;
    time_frozen_gbdt += rows[2].seconds;
    o.detail += "seed" + std::to_string(s) + " rmse " + fmt("%.3g", rows[0].test_rmse) + "/" +
                fmt("%.3g", rows[1].test_rmse) + "/" + fmt("%.3g", rows[2].test_rmse) + "; ";
  }
  o.passed = metric_wins == pinned::kAblationSeeds && time_frozen_extractor <= time_full &&
             time_frozen_gbdt <= time_full;
  o.detail += "seconds full=" + fmt("%.2f", time_full) +
              " frozen_extractor=" + fmt("%.2f", time_frozen_extractor) +
              " frozen_gbdt=" + fmt("%.2f", time_frozen_gbdt);
  return o;
}

// 5. Online hybrid against the naive forecast on an autoregressive stream.
Outcome online_sanity() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SeriesFrame stream =
        gen_ar_stream(pinned::kOnlineStreamSeedBase + s, pinned::kOnlineStreamLength);
    TrainingConfig c;
    c.window = pinned::kOnlineWindow;
    c.hidden_dim = pinned::kOnlineHidden;
    c.num_trees = pinned::kOnlineTrees;
    c.depth = pinned::kOnlineDepth;
    c.shrinkage = pinned::kOnlineShrinkage;
    c.learning_rate = pinned::kOnlineLearningRate;
    c.seed = s + 1;
    Rng rng(c.seed);
    const HybridModel model = HybridModel::random(c, 1, rng);
    const double hybrid = run_online_protocol(model, stream, c).final_value();
    const double naive = run_online_protocol(naive_stream(c.window), stream).final_value();
    o.passed &= hybrid < naive;
    worst = std::max(worst, hybrid / naive);
    o.detail += fmt("%.4f", hybrid) + "<" + fmt("%.4f", naive) + " ";
  }
  o.detail += "worst ratio=" + fmt("%.3f", worst);
  return o;
}

// 6. Metric hand cases.
Outcome metric_units() {
  struct Case {
    const char* name;
    double got;
    double want;
  };
  const std::vector<Case> cases{
      {"mse identical", mse(Forecast(Vec{1, 2, 3}, Vec{1, 2, 3})), 0.0},
      {"mse [0,0]/[1,1]", mse(Forecast(Vec{0, 0}, Vec{1, 1})), 1.0},
      {"rmse [0,0]/[1,1]", rmse(Forecast(Vec{0, 0}, Vec{1, 1})), 1.0},
      {"rmse [1,2]/[4,6]", rmse(Forecast(Vec{1, 2}, Vec{4, 6})), std::sqrt(12.5)},
      {"mape [100]/[110]", mape(Forecast(Vec{100}, Vec{110})), 0.1},
      {"mape perfect", mape(Forecast(Vec{5, -2}, Vec{5, -2})), 0.0},
      {"mape [100,200]/[110,180]", mape(Forecast(Vec{100, 200}, Vec{110, 180})), 0.1},
      {"smape perfect", smape(Forecast(Vec{5, -2}, Vec{5, -2})), 0.0},
      {"smape [100]/[50]", smape(Forecast(Vec{100}, Vec{50})), 2.0 / 3.0},
      {"smape swapped", smape(Forecast(Vec{50}, Vec{100})), 2.0 / 3.0},
      {"smape [1]/[-1]", smape(Forecast(Vec{1}, Vec{-1})), 2.0},
  };
  Outcome o;
  double worst = 0.0;
  for (const auto& c : cases) {
    const double e = std::abs(c.got - c.want);
    worst = std::max(worst, e);
    if (e > 1e-12) {
      o.passed = false;
      o.detail += std::string(c.name) + " off by " + fmt("%.3g", e) + "; ";
    }
  }
  o.detail += "cases=" + std::to_string(cases.size()) + " max_abs_error=" + fmt("%.3g", worst);
  return o;
}

// 7. Closed-form multiplication count against the instrumented counter over
// one LSTM step and the routing of every tree.
Outcome complexity_formula() {
  Rng rng(77);
  Outcome o;
  for (int i = 0; i < 10; ++i) {
    const std::size_t q = 1 + rng.index(12);
    const std::size_t m = 1 + rng.index(6);
    const std::size_t d = 1 + rng.index(5);
    const std::size_t trees = rng.index(8);
    const auto params = RecurrentParams::random(CellKind::kLstm, m, q, rng);
    const SoftGBDT gbdt = SoftGBDT::random(trees, d, q, 1, 0.1, rng);
    Vec x(m);
    for (auto& v : x) v = rng.normal();
    std::uint64_t counted = 0;
    {
      MultiplyCounter counter;
      const StepTrace step = cell_forward(params, x, Vec(q), Vec(q));
      const Vec h_aug = augment(step.h);
      for (const auto& tree : gbdt.trees()) (void)route(tree, h_aug);
      counted = counter.count();
    }
    const std::uint64_t formula = count_multiplications(q, d, trees, m);
    if (counted != formula) {
      o.passed = false;
      o.detail += "q=" + std::to_string(q) + " m=" + std::to_string(m) + " d=" +
                  std::to_string(d) + " M=" + std::to_string(trees) +
                  " counted=" + std::to_string(counted) + " formula=" + std::to_string(formula) +
                  "; ";
    }
  }
  if (o.passed) o.detail = "10/10 configurations exact";
  return o;
}

// 8. Deterministic reports and bit-exact save/load.
Outcome determinism_round_trip() {
  Outcome o;
  const SeriesFrame series = gen_ar_stream(5, 300);
  TrainingConfig c;
  c.epochs = 5;
  auto report_text = [&] {
    std::ostringstream out;
    fit_series(std::vector<SeriesFrame>{series}, c).report.write_csv(out);
    return out.str();
  };
  const bool same_report = report_text() == report_text();

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "recboost_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "series.csv");
    csv << "y\n";
    for (double y : series.target) csv << format_real(y) << '\n';
  }
  std::ostringstream sink;
  for (const char* run : {"a", "b"}) {
    cli::run_cli({"train", "--data", (dir / "series.csv").string(), "--epochs", "5",
                  "--out-dir", (dir / run).string()},
                 sink, sink);
  }
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const std::string cli_report = slurp(dir / "a" / "report.csv");
  const bool same_cli_report = !cli_report.empty() && cli_report == slurp(dir / "b" / "report.csv");

  std::size_t compared = 0;
  std::size_t mismatched = 0;
  Rng rng(8);
  for (const auto cell : {CellKind::kLstm, CellKind::kGru}) {
    for (const auto pooling : {Pooling::kLast, Pooling::kMean, Pooling::kMax}) {
      TrainingConfig mc;
      mc.cell = cell;
      mc.pooling = pooling;
      mc.layers = 2;
      mc.horizon = 2;
      mc.num_trees = 3;
      mc.depth = 3;
      HybridModel model = HybridModel::random(mc, 3, rng);
      std::vector<Vec> rows;
      for (int i = 0; i < 30; ++i) rows.push_back(Vec{rng.normal(), rng.normal(), rng.normal()});
      model.set_scaler(Scaler::fit(rows));
      const fs::path path = dir / "model.txt";
      save(model, path.string());
      const HybridModel loaded = load(path.string());
      for (int k = 0; k < 20; ++k) {
        std::vector<Vec> window;
        for (std::size_t t = 0; t < mc.window; ++t) {
          window.push_back(Vec{10 * rng.normal(), rng.normal(), rng.normal()});
        }
        ++compared;
        const Vec a = forward(model, window).prediction();
        const Vec b = forward(loaded, window).prediction();
        mismatched += !(a == b) || !(predict(model, window) == predict(loaded, window));
      }
    }
  }
  o.passed = same_report && same_cli_report && mismatched == 0;
  o.detail = std::string("report_csv ") + (same_report ? "identical" : "DIFFERENT") +
             ", cli report.csv " + (same_cli_report ? "identical" : "DIFFERENT") +
             ", save/load forward mismatches " + std::to_string(mismatched) + "/" +
             std::to_string(compared);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace recboost

int main(int argc, char** argv) {
  using namespace recboost;
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 60.0, gradient_correctness},
      {2, "path-probability normalization", 5.0, path_normalization},
      {3, "architecture verification", 300.0, architecture_verification},
      {4, "ablation direction", 600.0, ablation_direction},
      {5, "online protocol sanity", 300.0, online_sanity},
      {6, "metric unit correctness", 1.0, metric_units},
      {7, "complexity formula", 5.0, complexity_formula},
      {8, "determinism and round-trip", 30.0, determinism_round_trip},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && selected.count(c.id) == 0) continue;
    Outcome outcome;
    const Stopwatch watch;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    const double seconds = watch.seconds();
    const bool in_time = seconds < c.limit_seconds;
    const bool passed = outcome.passed && in_time;
    failures += !passed;
    std::printf("%s %d %s: %s; %.2fs (limit %gs%s)\n", passed ? "PASS" : "FAIL", c.id, c.name,
                outcome.detail.c_str(), seconds, c.limit_seconds, in_time ? "" : ", EXCEEDED");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
