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

#include "recboost/boosting.hpp"

#include <cmath>
#include <string>

#include "recboost/error.hpp"

namespace recboost {

SoftGBDT::SoftGBDT(std::size_t input_dim, Vec head, std::vector<SoftTree> trees,
                   double shrinkage)
    : head_(std::move(head)), trees_(std::move(trees)), shrinkage_(shrinkage),
      input_dim_(input_dim) {
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) {
    throw UsageError("shrinkage must lie in [0, 1], got " + std::to_string(shrinkage));
  }
  if (head_.empty()) {
    throw ShapeError("boosting head must have a positive output dimension");
  }
  if (input_dim_ < 2) {
    throw ShapeError("boosting input must hold the constant plus at least one feature");
  }
  for (std::size_t j = 0; j < trees_.size(); ++j) {
    const SoftTree& t = trees_[j];
    if (t.depth() != trees_.front().depth() || t.input_dim() != input_dim_ ||
        t.output_dim() != head_.size()) {
      throw ShapeError("tree " + std::to_string(j) + " (depth " + std::to_string(t.depth()) +
                       ", input " + std::to_string(t.input_dim()) + ", output " +
                       std::to_string(t.output_dim()) + ") does not match the chain");
    }
  }
}

SoftGBDT SoftGBDT::random(std::size_t num_trees, std::size_t depth, std::size_t feature_dim,
                          std::size_t output_dim, double shrinkage, Rng& rng) {
  std::vector<SoftTree> trees;
  trees.reserve(num_trees);
  for (std::size_t j = 0; j < num_trees; ++j) {
    trees.push_back(SoftTree::random(depth, feature_dim + 1, output_dim, rng));
  }
  return SoftGBDT(feature_dim + 1, Vec(output_dim), std::move(trees), shrinkage);
}

void SoftGBDT::set_head(Vec head) {
  if (head.size() != head_.size()) {
    throw ShapeError("boosting head length " + std::to_string(head.size()) + ", expected " +
                     std::to_string(head_.size()));
  }
  head_ = std::move(head);
}

BoostTrace gbdt_forward(const SoftGBDT& model, const Vec& h_aug) {
  if (h_aug.size() != model.input_dim()) {
    throw ShapeError("gbdt_forward: augmented input length " + std::to_string(h_aug.size()) +
                     ", expected " + std::to_string(model.input_dim()));
  }
  BoostTrace trace;
  trace.routes.reserve(model.num_trees());
  trace.outputs.reserve(model.num_trees());
  Vec tree_sum(model.output_dim());
  for (const SoftTree& tree : model.trees()) {
    RoutingTrace routing = route(tree, h_aug);
    Vec out = tree_forward(tree, routing);
    tree_sum = add(tree_sum, out);
    trace.routes.push_back(std::move(routing));
    trace.outputs.push_back(std::move(out));
  }
  trace.prediction = model.num_trees() == 0
                         ? model.head()
                         : add(model.head(), scale(tree_sum, model.shrinkage()));
  return trace;
}

void residuals_and_loss(const SoftGBDT& model, BoostTrace& trace, const Vec& y_true) {
  if (y_true.size() != model.output_dim()) {
    throw ShapeError("residuals_and_loss: target length " + std::to_string(y_true.size()) +
                     ", expected " + std::to_string(model.output_dim()));
  }
  if (trace.outputs.size() != model.num_trees()) {
    throw ShapeError("residuals_and_loss: trace does not belong to this model");
  }
  const double nu = model.shrinkage();
  trace.residuals.clear();
  trace.losses.clear();
  trace.total_loss = 0.0;
  Vec residual = sub(y_true, model.head());
  for (const Vec& out : trace.outputs) {
    Vec next(residual.size());
    for (std::size_t k = 0; k < residual.size(); ++k) {
      next[k] = residual[k] - nu * out[k];
    }
    const double loss = squared_norm(next);
    trace.residuals.push_back(std::move(residual));
    trace.losses.push_back(loss);
    trace.total_loss += loss;
    residual = std::move(next);
  }
}

DownstreamScalars downstream_scalars(const SoftGBDT& model, const BoostTrace& trace) {
  const std::size_t trees = model.num_trees();
  if (trace.residuals.size() != trees) {
    throw ShapeError("downstream_scalars: residuals have not been computed");
  }
  const double nu = model.shrinkage();
  DownstreamScalars s(trees, Vec(model.output_dim()));
  Vec running(model.output_dim());
  for (std::size_t j = trees; j-- > 0;) {
    for (std::size_t k = 0; k < running.size(); ++k) {
      running[k] += 2.0 * (nu * trace.outputs[j][k] - trace.residuals[j][k]);
    }
    s[j] = running;
  }
  return s;
}

BoostGradients gbdt_backward(const SoftGBDT& model, const BoostTrace& trace, const Vec& h_aug,
                             bool parameter_grads) {
  const DownstreamScalars s = downstream_scalars(model, trace);
  const double nu = model.shrinkage();
  BoostGradients grads;
  if (parameter_grads) {
    grads.leaves.resize(model.num_trees());
    grads.hyperplanes.resize(model.num_trees());
  }
  Vec feature_aug(h_aug.size());
  for (std::size_t j = 0; j < model.num_trees(); ++j) {
    const SoftTree& tree = model.tree(j);
    const RoutingTrace& routing = trace.routes[j];
    // dE/do_j = nu S_j.
    const Vec upstream = scale(s[j], nu);
    const std::vector<double> coeff = node_coefficients(tree, routing, upstream);
    for (std::size_t m = 0; m < coeff.size(); ++m) {
      axpy(coeff[m], tree.hyperplane(m), feature_aug);
    }
    if (!parameter_grads) continue;
    auto& leaf_grads = grads.leaves[j];
    leaf_grads.reserve(tree.num_leaves());
    for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
      leaf_grads.push_back(scale(upstream, routing.path_prob[leaf]));
    }
    auto& plane_grads = grads.hyperplanes[j];
    plane_grads.reserve(coeff.size());
    for (double c : coeff) {
      plane_grads.push_back(scale(h_aug, c));
    }
  }
  grads.feature = h_aug.size() > 1
                      ? Vec(std::vector<double>(feature_aug.begin() + 1, feature_aug.end()))
                      : Vec();
  return grads;
}

Vec init_head(std::span<const Vec> targets) {
  if (targets.empty()) {
    throw DataError("init_head: no targets to average");
  }
  Vec mean(targets.front().size());
  for (const Vec& t : targets) {
    if (t.size() != mean.size()) {
      throw ShapeError("init_head: targets of unequal length");
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
      mean[k] += t[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(targets.size());
  for (auto& v : mean) v *= inv;
  return mean;
}

std::uint64_t count_multiplications(std::uint64_t hidden_dim, std::uint64_t depth,
                                    std::uint64_t num_trees, std::uint64_t input_dim) {
  const std::uint64_t q = hidden_dim;
  const std::uint64_t internal = (std::uint64_t{1} << depth) - 1;
  return 4 * q * q + 4 * q * input_dim + 3 * q + num_trees * internal * (q + 1);
}

}  // namespace recboost
