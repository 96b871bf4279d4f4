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

// Gradient-boosted chain of soft trees.
//
// prediction = g0 + nu * sum_j o_j with o_j the output of tree j. Tree j is
// trained towards the residual left by its predecessors,
//
//   r_1 = y - g0,   r_{j+1} = r_j - nu o_j,
//
// and the training objective is the sum of the per-tree losses
// E = sum_j |r_j - nu o_j|^2 = sum_j |r_{j+1}|^2. Since r_k depends on every
// tree before k, the derivative of E with respect to o_j collects the losses
// of tree j and all its successors:
//
//   dE/do_j = nu S_j,   S_j = sum_{k >= j} 2 (nu o_k - r_k).

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "recboost/numerics.hpp"
#include "recboost/softtree.hpp"

namespace recboost {

class SoftGBDT {
 public:
  SoftGBDT() = default;
  /// `input_dim` is the augmented feature length q + 1. Throws ShapeError
  /// unless every tree shares depth, input and output sizes with each other
  /// and with `head`; throws UsageError unless 0 <= nu <= 1.
  SoftGBDT(std::size_t input_dim, Vec head, std::vector<SoftTree> trees, double shrinkage);

  static SoftGBDT random(std::size_t num_trees, std::size_t depth, std::size_t feature_dim,
                         std::size_t output_dim, double shrinkage, Rng& rng);

  const Vec& head() const { return head_; }
  void set_head(Vec head);
  double shrinkage() const { return shrinkage_; }
  std::size_t num_trees() const { return trees_.size(); }
  std::size_t output_dim() const { return head_.size(); }
  /// Augmented input length q + 1.
  std::size_t input_dim() const { return input_dim_; }
  const std::vector<SoftTree>& trees() const { return trees_; }
  const SoftTree& tree(std::size_t j) const { return trees_.at(j); }
  SoftTree& tree(std::size_t j) { return trees_.at(j); }

 private:
  Vec head_;
  std::vector<SoftTree> trees_;
  double shrinkage_ = 0.1;
  std::size_t input_dim_ = 0;
};

struct BoostTrace {
  std::vector<RoutingTrace> routes;
  std::vector<Vec> outputs;  // o_j
  Vec prediction;
  // Filled by residuals_and_loss.
  std::vector<Vec> residuals;  // r_j
  std::vector<double> losses;  // |r_j - nu o_j|^2
  double total_loss = 0.0;
};

using DownstreamScalars = std::vector<Vec>;

struct BoostGradients {
  std::vector<std::vector<Vec>> leaves;  // [tree][leaf]
  std::vector<std::vector<Vec>> hyperplanes;  // [tree][internal node]
  Vec feature;  // dE/dh, constant coordinate dropped (length q)
};

BoostTrace gbdt_forward(const SoftGBDT& model, const Vec& h_aug);

/// Fills residuals, per-tree losses and total loss of a forward trace.
void residuals_and_loss(const SoftGBDT& model, BoostTrace& trace, const Vec& y_true);

/// S_j for every tree, as suffix sums computed right to left.
DownstreamScalars downstream_scalars(const SoftGBDT& model, const BoostTrace& trace);

/// Leaf and hyperplane gradients plus dE/dh. With `parameter_grads` false
/// only the feature gradient is produced (frozen chain).
BoostGradients gbdt_backward(const SoftGBDT& model, const BoostTrace& trace, const Vec& h_aug,
                             bool parameter_grads = true);

/// Mean of the targets; throws DataError for an empty set.
Vec init_head(std::span<const Vec> targets);

/// Multiplications of one LSTM cell step plus the routing of M trees:
/// 4q^2 + 4qm + 3q + M (2^d - 1)(q + 1).
std::uint64_t count_multiplications(std::uint64_t hidden_dim, std::uint64_t depth,
                                    std::uint64_t num_trees, std::uint64_t input_dim);

}  // namespace recboost
