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

#include <vector>

#include <benchmark/benchmark.h>

#include "recboost/model.hpp"
#include "recboost/softtree.hpp"

namespace recboost {
namespace {

TrainingConfig bench_config(std::size_t hidden, std::size_t depth, std::size_t trees) {
  TrainingConfig c;
  c.hidden_dim = hidden;
  c.depth = depth;
  c.num_trees = trees;
  c.window = 8;
  return c;
}

std::vector<Vec> bench_window(Rng& rng, std::size_t steps, std::size_t dim) {
  std::vector<Vec> w(steps, Vec(dim));
  for (auto& row : w) {
    for (auto& v : row) v = rng.normal();
  }
  return w;
}

void BM_Route(benchmark::State& state) {
  Rng rng(1);
  const auto depth = static_cast<std::size_t>(state.range(0));
  const SoftTree tree = SoftTree::random(depth, 17, 1, rng);
  Vec h(16);
  for (auto& v : h) v = rng.normal();
  const Vec h_aug = augment(h);
  for (auto _ : state) benchmark::DoNotOptimize(route(tree, h_aug));
}
BENCHMARK(BM_Route)->DenseRange(1, 6);

void BM_Forward(benchmark::State& state) {
  Rng rng(2);
  const auto c = bench_config(static_cast<std::size_t>(state.range(0)), 3, 10);
  const HybridModel m = HybridModel::random(c, 4, rng);
  const auto window = bench_window(rng, c.window, 4);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, window));
}
BENCHMARK(BM_Forward)->Arg(8)->Arg(16)->Arg(32);

void BM_ForwardBackward(benchmark::State& state) {
  Rng rng(3);
  const auto c = bench_config(static_cast<std::size_t>(state.range(0)), 3, 10);
  const HybridModel m = HybridModel::random(c, 4, rng);
  const auto window = bench_window(rng, c.window, 4);
  const Vec y{0.5};
  for (auto _ : state) {
    ForwardTrace trace = forward(m, window);
    benchmark::DoNotOptimize(backward(m, trace, y));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(8)->Arg(16)->Arg(32);

void BM_TrainEpoch(benchmark::State& state) {
  Rng rng(4);
  const auto c = bench_config(8, 2, 5);
  std::vector<Window> windows;
  for (int i = 0; i < 100; ++i) windows.push_back({bench_window(rng, c.window, 1), Vec{0.1}, 0});
  TrainingConfig one = c;
  one.epochs = 1;
  HybridModel m = HybridModel::random(c, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(train_offline(m, windows, one));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(windows.size()));
}
BENCHMARK(BM_TrainEpoch);

}  // namespace
}  // namespace recboost

BENCHMARK_MAIN();
