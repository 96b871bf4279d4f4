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

#include "recboost/model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

#include "double_double.hpp"
#include "recboost/error.hpp"

namespace recboost {
namespace {

std::string dims(std::size_t n) { return std::to_string(n); }

void check_window(const HybridModel& model, std::span<const Vec> window) {
  if (window.size() != model.window()) {
    throw ShapeError("window has " + dims(window.size()) + " rows, model expects " +
                     dims(model.window()));
  }
  for (std::size_t t = 0; t < window.size(); ++t) {
    if (window[t].size() != model.input_dim()) {
      throw ShapeError("window row " + dims(t) + " has length " + dims(window[t].size()) +
                       ", model expects " + dims(model.input_dim()));
    }
  }
}

void check_target(const HybridModel& model, const Vec& y) {
  if (y.size() != model.horizon()) {
    throw ShapeError("target length " + dims(y.size()) + ", model horizon " +
                     dims(model.horizon()));
  }
}

}  // namespace

void TrainingConfig::validate() const {
  auto fail = [](const std::string& what) { throw UsageError("invalid config: " + what); };
  if (hidden_dim < 1) fail("hidden_dim must be at least 1");
  if (layers < 1) fail("layers must be at least 1");
  if (window < 1) fail("window must be at least 1");
  if (horizon < 1) fail("horizon must be at least 1");
  if (depth < 1 || depth > 16) fail("depth must lie in [1, 16]");
  if (!(shrinkage > 0.0 && shrinkage <= 1.0)) fail("shrinkage must lie in (0, 1]");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate must be finite and non-negative");
  }
  if (epochs < 1) fail("epochs must be at least 1");
  if (online_steps < 1) fail("online_steps must be at least 1");
  if (clip_norm && !(*clip_norm > 0.0 && std::isfinite(*clip_norm))) {
    fail("clip_norm must be positive");
  }
}

HybridModel::HybridModel(RecurrentStack extractor, Pooling pooling, SoftGBDT gbdt,
                         std::size_t window, std::size_t depth)
    : extractor_(std::move(extractor)),
      pooling_(pooling),
      gbdt_(std::move(gbdt)),
      window_(window),
      depth_(depth) {
  if (extractor_.num_layers() == 0) {
    throw ShapeError("hybrid model needs at least one recurrent layer");
  }
  if (gbdt_.input_dim() != extractor_.hidden_dim() + 1) {
    throw ShapeError("boosting input length " + dims(gbdt_.input_dim()) +
                     " does not match hidden size " + dims(extractor_.hidden_dim()) + " + 1");
  }
  if (window_ < 1) throw ShapeError("window must be at least 1");
  if (gbdt_.output_dim() < 1) throw ShapeError("horizon must be at least 1");
  for (std::size_t j = 0; j < gbdt_.num_trees(); ++j) {
    if (gbdt_.tree(j).depth() != depth_) {
      throw ShapeError("tree " + dims(j) + " has depth " + dims(gbdt_.tree(j).depth()) +
                       ", model depth is " + dims(depth_));
    }
  }
}

HybridModel HybridModel::random(const TrainingConfig& config, std::size_t input_dim, Rng& rng) {
  config.validate();
  if (input_dim < 1) throw UsageError("input dimension must be at least 1");
  RecurrentStack stack =
      RecurrentStack::random(config.cell, input_dim, config.hidden_dim, config.layers, rng);
  SoftGBDT gbdt = SoftGBDT::random(config.num_trees, config.depth, config.hidden_dim,
                                   config.horizon, config.shrinkage, rng);
  return HybridModel(std::move(stack), config.pooling, std::move(gbdt), config.window,
                     config.depth);
}

void HybridModel::set_scaler(Scaler scaler) {
  if (!scaler.fitted()) throw UsageError("cannot attach an unfitted scaler");
  if (scaler.dim() != input_dim()) {
    throw ShapeError("scaler covers " + dims(scaler.dim()) + " features, model input is " +
                     dims(input_dim()));
  }
  scaler_ = std::move(scaler);
}

ForwardTrace forward(const HybridModel& model, std::span<const Vec> window) {
  check_window(model, window);
  ForwardTrace trace;
  trace.sequence = forward_sequence(model.extractor(), window);
  trace.pooled = pool(trace.sequence.top_hiddens(), model.pooling());
  trace.h_aug = augment(trace.pooled.value);
  trace.boost = gbdt_forward(model.gbdt(), trace.h_aug);
  return trace;
}

GradientSet GradientSet::zeros_like(const HybridModel& model) {
  GradientSet g;
  for (const auto& layer : model.extractor().layers()) {
    g.extractor.push_back(RecurrentGradients::zeros_like(layer));
  }
  for (const auto& tree : model.gbdt().trees()) {
    g.leaves.emplace_back(tree.num_leaves(), Vec(tree.output_dim()));
    g.hyperplanes.emplace_back(tree.num_internal(), Vec(tree.input_dim()));
  }
  return g;
}

namespace {

// With `materialize_frozen` false, a frozen component's gradients are left
// empty instead of zero-filled; sgd_step skips them either way.
GradientSet backward_impl(const HybridModel& model, ForwardTrace& trace, const Vec& y_true,
                          bool materialize_frozen) {
  check_target(model, y_true);
  residuals_and_loss(model.gbdt(), trace.boost, y_true);
  GradientSet grads;
  if (materialize_frozen) {
    grads = GradientSet::zeros_like(model);
  }
  if (model.extractor_frozen() && model.gbdt_frozen()) return grads;

  BoostGradients boost =
      gbdt_backward(model.gbdt(), trace.boost, trace.h_aug, !model.gbdt_frozen());
  if (!model.gbdt_frozen()) {
    grads.leaves = std::move(boost.leaves);
    grads.hyperplanes = std::move(boost.hyperplanes);
  }
  if (!model.extractor_frozen()) {
    StackGradients stack = bptt(model.extractor(), trace.sequence, boost.feature, trace.pooled);
    grads.extractor = std::move(stack.layers);
  }
  return grads;
}

}  // namespace

GradientSet backward(const HybridModel& model, ForwardTrace& trace, const Vec& y_true) {
  return backward_impl(model, trace, y_true, true);
}

double total_loss(const HybridModel& model, std::span<const Vec> window, const Vec& y_true) {
  check_target(model, y_true);
  ForwardTrace trace = forward(model, window);
  residuals_and_loss(model.gbdt(), trace.boost, y_true);
  return trace.boost.total_loss;
}

namespace {

template <typename Model, typename Fn>
void for_each_block(Model& model, Fn&& fn) {
  const std::string cell(to_string(model.extractor().kind()));
  const auto names = gate_names(model.extractor().kind());
  for (std::size_t l = 0; l < model.extractor().num_layers(); ++l) {
    const std::string prefix = cell + ".layer" + dims(l) + ".";
    for (std::size_t g = 0; g < names.size(); ++g) {
      fn(prefix + "W_" + std::string(names[g]), l, g, false);
    }
    for (std::size_t g = 0; g < names.size(); ++g) {
      fn(prefix + "b_" + std::string(names[g]), l, g, true);
    }
  }
}

}  // namespace

std::vector<ParameterBlock> parameter_blocks(HybridModel& model) {
  std::vector<ParameterBlock> out;
  const bool ef = model.extractor_frozen();
  for_each_block(model, [&](const std::string& group, std::size_t l, std::size_t g, bool bias) {
    RecurrentParams& p = model.extractor().mutable_layer(l);
    out.push_back({group, group, bias ? p.gate_biases[g].span() : p.gate_weights[g].span(), ef});
  });
  const bool gf = model.gbdt_frozen();
  for (std::size_t j = 0; j < model.gbdt().num_trees(); ++j) {
    SoftTree& tree = model.gbdt().tree(j);
    const std::string prefix = "gbdt.tree" + dims(j) + ".";
    for (std::size_t m = 0; m < tree.num_internal(); ++m) {
      out.push_back({"gbdt.hyperplanes", prefix + "node" + dims(m), tree.hyperplane(m).span(), gf});
    }
    for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
      out.push_back({"gbdt.leaves", prefix + "leaf" + dims(leaf), tree.leaf(leaf).span(), gf});
    }
  }
  return out;
}

std::vector<ParameterBlock> gradient_blocks(const HybridModel& model, GradientSet& grads) {
  const std::size_t layers = model.extractor().num_layers();
  const std::size_t trees = model.gbdt().num_trees();
  if (grads.extractor.size() != layers || grads.leaves.size() != trees ||
      grads.hyperplanes.size() != trees) {
    throw ShapeError("gradient set does not mirror the model");
  }
  std::vector<ParameterBlock> out;
  const bool ef = model.extractor_frozen();
  for_each_block(model, [&](const std::string& group, std::size_t l, std::size_t g, bool bias) {
    RecurrentGradients& p = grads.extractor[l];
    if (p.gate_weights.size() <= g || p.gate_biases.size() <= g) {
      throw ShapeError("gradient set is missing " + group);
    }
    out.push_back({group, group, bias ? p.gate_biases[g].span() : p.gate_weights[g].span(), ef});
  });
  const bool gf = model.gbdt_frozen();
  for (std::size_t j = 0; j < trees; ++j) {
    const SoftTree& tree = model.gbdt().tree(j);
    if (grads.hyperplanes[j].size() != tree.num_internal() ||
        grads.leaves[j].size() != tree.num_leaves()) {
      throw ShapeError("gradient set does not mirror tree " + dims(j));
    }
    const std::string prefix = "gbdt.tree" + dims(j) + ".";
    for (std::size_t m = 0; m < tree.num_internal(); ++m) {
      out.push_back(
          {"gbdt.hyperplanes", prefix + "node" + dims(m), grads.hyperplanes[j][m].span(), gf});
    }
    for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
      out.push_back({"gbdt.leaves", prefix + "leaf" + dims(leaf), grads.leaves[j][leaf].span(), gf});
    }
  }
  return out;
}

std::uint64_t parameter_checksum(const HybridModel& model) {
  HybridModel copy = model;
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const ParameterBlock& block : parameter_blocks(copy)) {
    for (double v : block.values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int byte = 0; byte < 8; ++byte) {
        hash ^= (bits >> (8 * byte)) & 0xffU;
        hash *= 0x100000001b3ULL;
      }
    }
  }
  return hash;
}

namespace {

// Calls fn(params, grads, frozen, describe) for every parameter block in
// parameter_blocks() order without building names; describe() produces the
// block path on demand for error messages.
template <typename Fn>
void zip_blocks(HybridModel& model, const GradientSet& grads, Fn&& fn) {
  const std::size_t layers = model.extractor().num_layers();
  const std::size_t trees = model.gbdt().num_trees();
  const bool ef = model.extractor_frozen();
  const bool gf = model.gbdt_frozen();
  const bool skip_extractor = ef && grads.extractor.empty();
  const bool skip_gbdt = gf && grads.leaves.empty() && grads.hyperplanes.empty();
  if ((!skip_extractor && grads.extractor.size() != layers) ||
      (!skip_gbdt && (grads.leaves.size() != trees || grads.hyperplanes.size() != trees))) {
    throw ShapeError("gradient set does not mirror the model");
  }
  const CellKind kind = model.extractor().kind();
  const auto names = gate_names(kind);
  for (std::size_t l = 0; l < (skip_extractor ? 0 : layers); ++l) {
    RecurrentParams& p = model.extractor().mutable_layer(l);
    const RecurrentGradients& g = grads.extractor[l];
    if (g.gate_weights.size() != names.size() || g.gate_biases.size() != names.size()) {
      throw ShapeError("gradient set does not mirror layer " + dims(l));
    }
    for (int bias = 0; bias < 2; ++bias) {
      for (std::size_t k = 0; k < names.size(); ++k) {
        auto describe = [&] {
          return std::string(to_string(kind)) + ".layer" + dims(l) + "." + (bias ? "b_" : "W_") +
                 std::string(names[k]);
        };
        if (bias) {
          fn(p.gate_biases[k].span(), g.gate_biases[k].span(), ef, describe);
        } else {
          fn(p.gate_weights[k].span(), g.gate_weights[k].span(), ef, describe);
        }
      }
    }
  }
  for (std::size_t j = 0; j < (skip_gbdt ? 0 : trees); ++j) {
    SoftTree& tree = model.gbdt().tree(j);
    if (grads.hyperplanes[j].size() != tree.num_internal() ||
        grads.leaves[j].size() != tree.num_leaves()) {
      throw ShapeError("gradient set does not mirror tree " + dims(j));
    }
    for (std::size_t m = 0; m < tree.num_internal(); ++m) {
      fn(tree.hyperplane(m).span(), grads.hyperplanes[j][m].span(), gf,
         [&] { return "gbdt.tree" + dims(j) + ".node" + dims(m); });
    }
    for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
      fn(tree.leaf(leaf).span(), grads.leaves[j][leaf].span(), gf,
         [&] { return "gbdt.tree" + dims(j) + ".leaf" + dims(leaf); });
    }
  }
}

}  // namespace

void sgd_step(HybridModel& model, const GradientSet& grads, double learning_rate,
              std::optional<double> clip_norm) {
  double norm_sq = 0.0;
  zip_blocks(model, grads,
             [&](std::span<double> p, std::span<const double> g, bool frozen, auto&& describe) {
               if (g.size() != p.size()) {
                 throw ShapeError("gradient " + describe() + " has " + dims(g.size()) +
                                  " entries, parameter has " + dims(p.size()));
               }
               for (std::size_t i = 0; i < g.size(); ++i) {
                 if (!std::isfinite(g[i])) {
                   throw NumericError("non-finite gradient at " + describe() + "[" + dims(i) +
                                      "]");
                 }
                 if (!frozen) norm_sq += g[i] * g[i];
               }
             });
  double factor = learning_rate;
  if (clip_norm) {
    const double norm = std::sqrt(norm_sq);
    if (norm > *clip_norm) factor *= *clip_norm / norm;
  }
  zip_blocks(model, grads,
             [&](std::span<double> p, std::span<const double> g, bool frozen, auto&&) {
               if (frozen) return;
               for (std::size_t i = 0; i < p.size(); ++i) p[i] -= factor * g[i];
             });
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,eval_rmse\n";
  for (std::size_t e = 0; e < train_loss.size(); ++e) {
    out << (e + 1) << ',' << format_real(train_loss[e]) << ','
        << format_real(e < eval_metric.size() ? eval_metric[e]
                                              : std::numeric_limits<double>::quiet_NaN())
        << '\n';
  }
  std::ostringstream hex;
  hex << std::hex << checksum;
  out << "# parameter_checksum," << hex.str() << '\n';
}

namespace {

double window_rmse(const HybridModel& model, std::span<const Window> windows) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const Window& w : windows) {
    const Vec pred = forward(model, w.inputs).prediction();
    for (std::size_t h = 0; h < pred.size(); ++h) {
      double p = pred[h];
      double y = w.target[h];
      if (model.scaler()) {
        p = model.scaler()->inverse_target(p);
        y = model.scaler()->inverse_target(y);
      }
      acc += (y - p) * (y - p);
      ++n;
    }
  }
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

TrainReport train_offline(HybridModel& model, std::span<const Window> train,
                          const TrainingConfig& config, std::span<const Window> eval) {
  config.validate();
  if (train.empty()) throw DataError("train_offline: empty training set");
  for (const Window& w : train) {
    check_window(model, w.inputs);
    check_target(model, w.target);
  }
  const std::span<const Window> scored = eval.empty() ? train : eval;
  const auto start = std::chrono::steady_clock::now();
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss = 0.0;
    for (std::size_t idx : order) {
      ForwardTrace trace = forward(model, train[idx].inputs);
      const GradientSet grads = backward_impl(model, trace, train[idx].target, false);
      loss += trace.boost.total_loss;
      sgd_step(model, grads, config.learning_rate, config.clip_norm);
    }
    report.train_loss.push_back(loss / static_cast<double>(train.size()));
    report.eval_metric.push_back(window_rmse(model, scored));
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.checksum = parameter_checksum(model);
  return report;
}

FittedModel fit_series(std::span<const SeriesFrame> train_blocks, const TrainingConfig& config,
                       const SeriesFrame* eval) {
  config.validate();
  if (train_blocks.empty()) throw DataError("fit_series: no training data");
  std::vector<Vec> rows;
  for (const SeriesFrame& block : train_blocks) {
    for (Vec& r : block.feature_rows()) rows.push_back(std::move(r));
  }
  Scaler scaler = Scaler::fit(rows);
  std::vector<Window> train;
  for (const SeriesFrame& block : train_blocks) {
    for (Window& w : make_windows(transform_frame(scaler, block), config.window, config.horizon)) {
      train.push_back(std::move(w));
    }
  }
  std::vector<Window> held_out;
  if (eval != nullptr) {
    held_out = make_windows(transform_frame(scaler, *eval), config.window, config.horizon);
  }
  Rng rng(config.seed);
  HybridModel model = HybridModel::random(config, train_blocks.front().feature_dim(), rng);
  model.set_scaler(scaler);
  std::vector<Vec> targets;
  targets.reserve(train.size());
  for (const Window& w : train) targets.push_back(w.target);
  model.gbdt().set_head(init_head(targets));
  TrainReport report = train_offline(model, train, config, held_out);
  return {std::move(model), std::move(report)};
}

Vec predict(const HybridModel& model, std::span<const Vec> raw_window) {
  if (!model.scaler()) return forward(model, raw_window).prediction();
  const Scaler& scaler = *model.scaler();
  Vec pred = forward(model, transform_rows(scaler, raw_window)).prediction();
  for (double& v : pred) v = scaler.inverse_target(v);
  return pred;
}

Vec predict_recursive(const HybridModel& model, std::span<const Vec> raw_seed_window,
                      std::size_t horizon) {
  if (horizon < 1) throw UsageError("recursive horizon must be at least 1");
  if (model.horizon() != 1) {
    throw UsageError("recursive prediction needs a scalar-output model, this one predicts " +
                     dims(model.horizon()) + " values");
  }
  if (model.input_dim() != 1) {
    throw UsageError("recursive prediction needs a target-only model (input length 1), got " +
                     dims(model.input_dim()));
  }
  check_window(model, raw_seed_window);
  std::vector<Vec> window(raw_seed_window.begin(), raw_seed_window.end());
  Vec out(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    out[h] = predict(model, window)[0];
    window.erase(window.begin());
    window.push_back(Vec{out[h]});
  }
  return out;
}

OnlineForecaster::OnlineForecaster(HybridModel model, const TrainingConfig& config)
    : model_(std::move(model)), config_(config), scaler_(Scaler::running(model_.input_dim())) {
  config_.validate();
  if (model_.horizon() != 1) {
    throw UsageError("online learning predicts one step ahead; model horizon is " +
                     dims(model_.horizon()));
  }
}

std::vector<Vec> OnlineForecaster::standardized_window() const {
  return transform_rows(scaler_, history_);
}

double OnlineForecaster::predict_next() const {
  if (!ready()) {
    throw DataError("online prediction needs " + dims(model_.window()) + " observations, have " +
                    dims(history_.size()));
  }
  return scaler_.inverse_target(forward(model_, standardized_window()).prediction()[0]);
}

std::optional<double> OnlineForecaster::observe(const Vec& raw_row) {
  if (raw_row.size() != model_.input_dim()) {
    throw ShapeError("observation has length " + dims(raw_row.size()) + ", model expects " +
                     dims(model_.input_dim()));
  }
  if (!all_finite(raw_row.span())) throw DataError("non-finite observation");
  if (!ready()) {
    history_.push_back(raw_row);
    scaler_.update(raw_row);
    if (ready() && !head_initialized_) {
      double mean = 0.0;
      for (const Vec& r : history_) mean += scaler_.transform_target(r[0]);
      mean /= static_cast<double>(history_.size());
      model_.gbdt().set_head(Vec{mean});
      head_initialized_ = true;
    }
    return std::nullopt;
  }
  const std::vector<Vec> window = standardized_window();
  const double prediction = scaler_.inverse_target(forward(model_, window).prediction()[0]);
  const Vec target{scaler_.transform_target(raw_row[0])};
  for (std::size_t s = 0; s < config_.online_steps; ++s) {
    ForwardTrace trace = forward(model_, window);
    const GradientSet grads = backward_impl(model_, trace, target, false);
    sgd_step(model_, grads, config_.learning_rate, config_.clip_norm);
  }
  history_.erase(history_.begin());
  history_.push_back(raw_row);
  scaler_.update(raw_row);
  return prediction;
}

// Gradient checking. The loss is re-evaluated by an independent forward pass
// in double-double precision so that central-difference round-off stays far
// below the tolerance even for gradient entries near 1e-9.
namespace {

using Real = detail::DoubleDouble;

// Parameters copied into extended precision, one flat block per entry of
// parameter_blocks() and in the same order.
struct ExtendedModel {
  std::vector<std::vector<Real>> blocks;
  std::size_t extractor_blocks = 0;
};

ExtendedModel extend(HybridModel& model) {
  ExtendedModel ext;
  for (const ParameterBlock& b : parameter_blocks(model)) {
    ext.blocks.emplace_back(b.values.begin(), b.values.end());
  }
  ext.extractor_blocks =
      model.extractor().num_layers() * 2 * gate_count(model.extractor().kind());
  return ext;
}

std::vector<Real> reference_cell(const std::vector<std::vector<Real>>& blocks, std::size_t base,
                                 CellKind kind, std::size_t q, std::size_t m,
                                 const std::vector<Real>& x, const std::vector<Real>& h_prev,
                                 std::vector<Real>& c) {
  const std::size_t gates = gate_count(kind);
  auto affine = [&](std::size_t g, const std::vector<Real>& rec) {
    const auto& w = blocks[base + g];
    const auto& b = blocks[base + gates + g];
    std::vector<Real> z(q);
    for (std::size_t r = 0; r < q; ++r) {
      Real acc = b[r];
      for (std::size_t k = 0; k < q; ++k) acc += w[r * (q + m) + k] * rec[k];
      for (std::size_t k = 0; k < m; ++k) acc += w[r * (q + m) + q + k] * x[k];
      z[r] = acc;
    }
    return z;
  };
  std::vector<Real> h(q);
  if (kind == CellKind::kLstm) {
    const auto f = affine(0, h_prev);
    const auto i = affine(1, h_prev);
    const auto cc = affine(2, h_prev);
    const auto o = affine(3, h_prev);
    for (std::size_t r = 0; r < q; ++r) {
      c[r] = detail::sigmoid(f[r]) * c[r] + detail::sigmoid(i[r]) * detail::tanh(cc[r]);
      h[r] = detail::sigmoid(o[r]) * detail::tanh(c[r]);
    }
  } else {
    const auto z = affine(0, h_prev);
    const auto rg = affine(1, h_prev);
    std::vector<Real> gated(q);
    for (std::size_t r = 0; r < q; ++r) gated[r] = detail::sigmoid(rg[r]) * h_prev[r];
    const auto cand = affine(2, gated);
    for (std::size_t r = 0; r < q; ++r) {
      const Real zr = detail::sigmoid(z[r]);
      h[r] = (Real(1.0) - zr) * h_prev[r] + zr * detail::tanh(cand[r]);
    }
  }
  return h;
}

// The pooled top-layer feature with the constant 1 prepended.
std::vector<Real> reference_feature(const HybridModel& model, const ExtendedModel& ext,
                                    std::span<const Vec> window) {
  const CellKind kind = model.extractor().kind();
  const std::size_t gates = gate_count(kind);
  std::vector<std::vector<Real>> seq;
  for (const Vec& row : window) seq.emplace_back(row.begin(), row.end());
  for (std::size_t l = 0; l < model.extractor().num_layers(); ++l) {
    const RecurrentParams& p = model.extractor().layer(l);
    std::vector<Real> h(p.hidden_dim);
    std::vector<Real> c(p.hidden_dim);
    std::vector<std::vector<Real>> next;
    for (const auto& x : seq) {
      h = reference_cell(ext.blocks, l * 2 * gates, kind, p.hidden_dim, p.input_dim, x, h, c);
      next.push_back(h);
    }
    seq = std::move(next);
  }
  const std::size_t q = model.hidden_dim();
  std::vector<Real> pooled(q);
  switch (model.pooling()) {
    case Pooling::kLast:
      pooled = seq.back();
      break;
    case Pooling::kMean:
      for (const auto& h : seq) {
        for (std::size_t k = 0; k < q; ++k) pooled[k] += h[k];
      }
      for (Real& v : pooled) v /= Real(static_cast<double>(seq.size()));
      break;
    case Pooling::kMax:
      pooled = seq.front();
      for (const auto& h : seq) {
        for (std::size_t k = 0; k < q; ++k) {
          if (pooled[k] < h[k]) pooled[k] = h[k];
        }
      }
      break;
  }
  std::vector<Real> h_aug{Real(1.0)};
  h_aug.insert(h_aug.end(), pooled.begin(), pooled.end());
  return h_aug;
}

// E = sum_j |r_j - nu o_j|^2 with the residuals recomputed from scratch.
Real reference_boost_loss(const HybridModel& model, const ExtendedModel& ext,
                          const std::vector<Real>& h_aug, const Vec& y_true) {
  const SoftGBDT& gbdt = model.gbdt();
  const std::size_t out_dim = gbdt.output_dim();
  const Real nu = gbdt.shrinkage();
  std::vector<Real> residual(out_dim);
  for (std::size_t h = 0; h < out_dim; ++h) residual[h] = Real(y_true[h]) - Real(gbdt.head()[h]);
  Real loss = 0.0;
  std::size_t base = ext.extractor_blocks;
  for (std::size_t j = 0; j < gbdt.num_trees(); ++j) {
    const SoftTree& tree = gbdt.tree(j);
    const std::size_t internal = tree.num_internal();
    std::vector<Real> left(internal);
    for (std::size_t node = 0; node < internal; ++node) {
      Real a = 0.0;
      for (std::size_t k = 0; k < h_aug.size(); ++k) a += ext.blocks[base + node][k] * h_aug[k];
      left[node] = detail::sigmoid(a);
    }
    std::vector<Real> output(out_dim);
    for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
      Real pp = 1.0;
      std::size_t node = 0;
      for (std::size_t bit = tree.depth(); bit-- > 0;) {
        if (((leaf >> bit) & 1U) == 0) {
          pp *= left[node];
          node = 2 * node + 1;
        } else {
          pp *= Real(1.0) - left[node];
          node = 2 * node + 2;
        }
      }
      const auto& phi = ext.blocks[base + internal + leaf];
      for (std::size_t h = 0; h < out_dim; ++h) output[h] += pp * phi[h];
    }
    for (std::size_t h = 0; h < out_dim; ++h) {
      const Real e = residual[h] - nu * output[h];
      loss += e * e;
      residual[h] = e;
    }
    base += internal + tree.num_leaves();
  }
  return loss;
}

void record(GradCheckReport& report, const std::string& group, double err, std::size_t entries) {
  auto it = std::find_if(report.groups.begin(), report.groups.end(),
                         [&](const GradCheckGroup& g) { return g.name == group; });
  if (it == report.groups.end()) {
    report.groups.push_back({group, err, entries});
  } else {
    it->max_rel_error = std::max(it->max_rel_error, err);
    it->entries += entries;
  }
  report.max_rel_error = std::max(report.max_rel_error, err);
}

}  // namespace

GradCheckReport compare_gradients(const HybridModel& model, std::span<const Vec> window,
                                  const Vec& y_true, double eps, double tol,
                                  const GradientSet& analytic) {
  if (!(eps >= 1e-8 && eps <= 1e-4)) {
    throw UsageError("gradient check step must lie in [1e-8, 1e-4], got " + format_real(eps));
  }
  if (!(tol >= 0.0)) throw UsageError("gradient check tolerance must be non-negative");
  check_window(model, window);
  check_target(model, y_true);
  HybridModel copy = model;
  GradientSet grads = analytic;
  const std::vector<ParameterBlock> pb = parameter_blocks(copy);
  const std::vector<ParameterBlock> gb = gradient_blocks(copy, grads);
  ExtendedModel ext = extend(copy);
  const std::vector<Real> base_feature = reference_feature(copy, ext, window);
  const Real step = eps;
  GradCheckReport report;
  for (std::size_t k = 0; k < pb.size(); ++k) {
    if (pb[k].frozen) continue;
    if (gb[k].values.size() != pb[k].values.size()) {
      throw ShapeError("gradient " + gb[k].path + " does not match its parameter");
    }
    const bool in_extractor = k < ext.extractor_blocks;
    auto loss = [&] {
      return reference_boost_loss(
          copy, ext, in_extractor ? reference_feature(copy, ext, window) : base_feature, y_true);
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < pb[k].values.size(); ++i) {
      Real& v = ext.blocks[k][i];
      const Real saved = v;
      v = saved + step;
      const Real plus = loss();
      v = saved - step;
      const Real minus = loss();
      v = saved;
      const double numeric = static_cast<double>((plus - minus) / (Real(2.0) * step));
      const double a = gb[k].values[i];
      const double err =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, std::isfinite(err) ? err : std::numeric_limits<double>::infinity());
    }
    record(report, pb[k].group, worst, pb[k].values.size());
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

GradCheckReport grad_check(const HybridModel& model, std::span<const Vec> window,
                           const Vec& y_true, double eps, double tol) {
  check_window(model, window);
  check_target(model, y_true);
  ForwardTrace trace = forward(model, window);
  const GradientSet grads = backward(model, trace, y_true);
  return compare_gradients(model, window, y_true, eps, tol, grads);
}

void merge_report(GradCheckReport& into, const GradCheckReport& from) {
  for (const GradCheckGroup& g : from.groups) record(into, g.name, g.max_rel_error, g.entries);
  into.passed = into.passed && from.passed;
}

// Serialization.
namespace {

constexpr const char* kMagic = "recboost-model";
constexpr int kVersion = 1;

void put_values(std::ostream& out, std::span<const double> values) {
  for (double v : values) out << ' ' << format_hex(v);
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  // Next non-empty line split into words; the first must equal `key`.
  std::vector<std::string> expect(const std::string& key) {
    std::string line;
    while (true) {
      if (!std::getline(in_, line)) {
        ++line_no_;
        fail("unexpected end of file, expected '" + key + "'");
      }
      ++line_no_;
      if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    std::istringstream words(line);
    std::vector<std::string> out;
    for (std::string w; words >> w;) out.push_back(w);
    if (out.front() != key) fail("expected '" + key + "', found '" + out.front() + "'");
    return out;
  }

  std::string word(const std::string& key) {
    auto w = expect(key);
    if (w.size() != 2) fail("'" + key + "' takes exactly one value");
    return w[1];
  }

  std::size_t count(const std::string& key) {
    const std::string w = word(key);
    std::size_t v = 0;
    const auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) {
      fail("'" + key + "' needs a non-negative integer, got '" + w + "'");
    }
    return v;
  }

  double real(const std::string& text) {
    double v = 0.0;
    try {
      v = parse_real(text);
    } catch (const DataError&) {
      fail("malformed number '" + text + "'");
    }
    if (!std::isfinite(v)) fail("non-finite value '" + text + "'");
    return v;
  }

  // Reads "key v1 .. vn" into `dest`, which must already have n entries.
  void values(const std::string& key, std::span<double> dest) {
    const auto w = expect(key);
    if (w.size() != dest.size() + 1) {
      fail("'" + key + "' needs " + std::to_string(dest.size()) + " values, found " +
           std::to_string(w.size() - 1));
    }
    for (std::size_t i = 0; i < dest.size(); ++i) dest[i] = real(w[i + 1]);
  }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

}  // namespace

void save(const HybridModel& model, std::ostream& out) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "cell " << to_string(model.extractor().kind()) << '\n';
  out << "pooling " << to_string(model.pooling()) << '\n';
  out << "input_dim " << model.input_dim() << '\n';
  out << "hidden_dim " << model.hidden_dim() << '\n';
  out << "layers " << model.extractor().num_layers() << '\n';
  out << "window " << model.window() << '\n';
  out << "horizon " << model.horizon() << '\n';
  out << "depth " << model.depth() << '\n';
  out << "num_trees " << model.gbdt().num_trees() << '\n';
  out << "shrinkage " << format_hex(model.gbdt().shrinkage()) << '\n';
  out << "extractor_frozen " << (model.extractor_frozen() ? 1 : 0) << '\n';
  out << "gbdt_frozen " << (model.gbdt_frozen() ? 1 : 0) << '\n';
  out << "g0";
  put_values(out, model.gbdt().head().span());
  out << '\n';
  const auto names = gate_names(model.extractor().kind());
  for (std::size_t l = 0; l < model.extractor().num_layers(); ++l) {
    const RecurrentParams& p = model.extractor().layer(l);
    out << "layer " << l << '\n';
    for (std::size_t g = 0; g < names.size(); ++g) {
      out << "W_" << names[g];
      put_values(out, p.gate_weights[g].span());
      out << '\n';
    }
    for (std::size_t g = 0; g < names.size(); ++g) {
      out << "b_" << names[g];
      put_values(out, p.gate_biases[g].span());
      out << '\n';
    }
  }
  for (std::size_t j = 0; j < model.gbdt().num_trees(); ++j) {
    const SoftTree& tree = model.gbdt().tree(j);
    out << "tree " << j << '\n';
    for (std::size_t m = 0; m < tree.num_internal(); ++m) {
      out << "hyperplane";
      put_values(out, tree.hyperplane(m).span());
      out << '\n';
    }
    for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
      out << "leaf";
      put_values(out, tree.leaf(leaf).span());
      out << '\n';
    }
  }
  if (model.scaler()) {
    const Scaler& s = *model.scaler();
    out << "scaler " << (s.mode() == ScalerMode::kOffline ? "offline" : "running") << '\n';
    out << "count " << s.count() << '\n';
    out << "mean";
    put_values(out, s.mean().span());
    out << '\n';
    out << "m2";
    put_values(out, s.m2().span());
    out << '\n';
  } else {
    out << "scaler none\n";
  }
  out << "end\n";
}

void save(const HybridModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  save(model, out);
  out.flush();
  if (!out) throw DataError("failed writing model to '" + path + "'");
}

HybridModel load(std::istream& in, const std::string& source) {
  Reader r(in, source);
  const auto magic = r.expect(kMagic);
  if (magic.size() != 2 || magic[1] != std::to_string(kVersion)) {
    r.fail("unsupported model version '" + (magic.size() > 1 ? magic[1] : std::string()) +
           "', expected " + std::to_string(kVersion));
  }
  CellKind kind{};
  Pooling pooling{};
  try {
    kind = parse_cell_kind(r.word("cell"));
    pooling = parse_pooling(r.word("pooling"));
  } catch (const UsageError& e) {
    r.fail(e.what());
  }
  const std::size_t input_dim = r.count("input_dim");
  const std::size_t hidden_dim = r.count("hidden_dim");
  const std::size_t layers = r.count("layers");
  const std::size_t window = r.count("window");
  const std::size_t horizon = r.count("horizon");
  const std::size_t depth = r.count("depth");
  const std::size_t num_trees = r.count("num_trees");
  const double shrinkage = r.real(r.word("shrinkage"));
  const bool extractor_frozen = r.count("extractor_frozen") != 0;
  const bool gbdt_frozen = r.count("gbdt_frozen") != 0;
  if (input_dim == 0 || hidden_dim == 0 || layers == 0 || window == 0 || horizon == 0 ||
      depth == 0 || depth > 16 || layers > 64 || hidden_dim > 100000 || input_dim > 100000 ||
      horizon > 100000 || num_trees > 100000) {
    r.fail("model dimensions out of range");
  }
  Vec head(horizon);
  r.values("g0", head.span());

  const auto names = gate_names(kind);
  std::vector<RecurrentParams> stack;
  for (std::size_t l = 0; l < layers; ++l) {
    if (r.count("layer") != l) r.fail("layers out of order");
    RecurrentParams p = RecurrentParams::zeros(kind, l == 0 ? input_dim : hidden_dim, hidden_dim);
    for (std::size_t g = 0; g < names.size(); ++g) {
      r.values("W_" + std::string(names[g]), p.gate_weights[g].span());
    }
    for (std::size_t g = 0; g < names.size(); ++g) {
      r.values("b_" + std::string(names[g]), p.gate_biases[g].span());
    }
    stack.push_back(std::move(p));
  }
  std::vector<SoftTree> trees;
  for (std::size_t j = 0; j < num_trees; ++j) {
    if (r.count("tree") != j) r.fail("trees out of order");
    SoftTree tree(depth, hidden_dim + 1, horizon);
    for (std::size_t m = 0; m < tree.num_internal(); ++m) {
      r.values("hyperplane", tree.hyperplane(m).span());
    }
    for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
      r.values("leaf", tree.leaf(leaf).span());
    }
    trees.push_back(std::move(tree));
  }
  std::optional<Scaler> scaler;
  const std::string mode = r.word("scaler");
  if (mode == "offline" || mode == "running") {
    const std::size_t count = r.count("count");
    Vec mean(input_dim);
    Vec m2(input_dim);
    r.values("mean", mean.span());
    r.values("m2", m2.span());
    scaler = Scaler::restore(mode == "offline" ? ScalerMode::kOffline : ScalerMode::kRunning,
                             count, std::move(mean), std::move(m2));
  } else if (mode != "none") {
    r.fail("unknown scaler mode '" + mode + "'");
  }
  r.expect("end");

  try {
    HybridModel model(RecurrentStack(std::move(stack)), pooling,
                      SoftGBDT(hidden_dim + 1, std::move(head), std::move(trees), shrinkage),
                      window, depth);
    model.set_extractor_frozen(extractor_frozen);
    model.set_gbdt_frozen(gbdt_frozen);
    if (scaler && scaler->fitted()) model.set_scaler(std::move(*scaler));
    return model;
  } catch (const Error& e) {
    throw DataError(source + ": " + e.what());
  }
}

HybridModel load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  return load(in, path);
}

CrossValidationResult cross_validate(const SeriesFrame& frame,
                                     std::span<const TrainingConfig> grid, std::size_t k) {
  if (k < 2) throw UsageError("cross validation needs at least 2 folds");
  if (grid.empty()) throw UsageError("cross validation needs at least one candidate");
  for (const TrainingConfig& c : grid) c.validate();
  const std::size_t n = frame.size();
  std::vector<SeriesFrame> blocks;
  for (std::size_t b = 0; b < k; ++b) {
    blocks.push_back(frame.slice(b * n / k, (b + 1) * n / k));
  }
  for (const TrainingConfig& c : grid) {
    for (std::size_t b = 0; b < k; ++b) {
      if (blocks[b].size() < c.window + c.horizon) {
        throw DataError("fold " + dims(b) + " has " + dims(blocks[b].size()) +
                        " points, window + horizon needs " + dims(c.window + c.horizon));
      }
    }
  }
  CrossValidationResult result;
  for (const TrainingConfig& config : grid) {
    std::vector<double> scores;
    for (std::size_t b = 0; b < k; ++b) {
      std::vector<SeriesFrame> train;
      for (std::size_t o = 0; o < k; ++o) {
        if (o != b) train.push_back(blocks[o]);
      }
      const FittedModel fitted = fit_series(train, config);
      double acc = 0.0;
      std::size_t count = 0;
      const std::vector<Vec> rows = blocks[b].feature_rows();
      for (std::size_t t = 0; t + config.window + config.horizon <= rows.size(); ++t) {
        const Vec pred = predict(
            fitted.model, std::span<const Vec>(rows).subspan(t, config.window));
        for (std::size_t h = 0; h < config.horizon; ++h) {
          const double e = blocks[b].target[t + config.window + h] - pred[h];
          acc += e * e;
          ++count;
        }
      }
      scores.push_back(acc / static_cast<double>(count));
    }
    result.mean_scores.push_back(std::accumulate(scores.begin(), scores.end(), 0.0) /
                                 static_cast<double>(k));
    result.fold_scores.push_back(std::move(scores));
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < grid.size(); ++c) {
    const auto key = [&](std::size_t i) {
      return std::make_tuple(result.mean_scores[i], grid[i].num_trees, grid[i].depth,
                             grid[i].hidden_dim);
    };
    if (key(c) < key(best)) best = c;
  }
  result.best_index = best;
  result.best = grid[best];
  return result;
}

}  // namespace recboost
