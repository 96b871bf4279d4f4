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

// Fixed-depth soft binary decision trees.
//
// Internal nodes are numbered in heap order (root 0, children of m at 2m + 1
// on the left and 2m + 2 on the right); leaves are numbered 0..2^d - 1 from
// left to right. Node m routes left with probability p_m = sigma(w_m . h~)
// where h~ = {1, h} carries the bias in coordinate 0. A leaf's path
// probability pp_l is the product of the branch probabilities on its
// root-to-leaf path, and the tree outputs sum_l pp_l phi_l.
//
// With a_m = w_m . h~ the pre-activation of node m,
//
//   d pp_l / d a_m = pp_l (1[l in LD(m)] - p_m)     for m in A(l),
//
// where LD(m) is the set of leaves under the left child of m. Every gradient
// below is built from these per-node coefficients; none of them divides by
// p_m or 1 - p_m, so saturated nodes are safe.

#pragma once

#include <cstddef>
#include <vector>

#include "recboost/numerics.hpp"

namespace recboost {

/// Ancestor/descendant bookkeeping for a complete binary tree of depth d.
class TreeTopology {
 public:
  struct Ancestor {
    std::size_t node;
    bool went_left;
  };

  explicit TreeTopology(std::size_t depth);

  std::size_t depth() const { return depth_; }
  std::size_t num_internal() const { return (std::size_t{1} << depth_) - 1; }
  std::size_t num_leaves() const { return std::size_t{1} << depth_; }

  /// A(l): root-first internal nodes on the path to leaf l with the branch taken.
  const std::vector<Ancestor>& ancestors(std::size_t leaf) const { return ancestors_.at(leaf); }
  /// RA(l): ancestors of l from which the path continues to the right.
  std::vector<std::size_t> right_ancestors(std::size_t leaf) const;
  /// D(m): leaves below internal node m.
  std::vector<std::size_t> descendants(std::size_t node) const;
  /// LD(m): leaves below the left child of internal node m.
  std::vector<std::size_t> left_descendants(std::size_t node) const;

 private:
  std::size_t depth_;
  std::vector<std::vector<Ancestor>> ancestors_;
};

class SoftTree {
 public:
  SoftTree(std::size_t depth, std::size_t input_dim, std::size_t output_dim);

  /// Hyperplanes drawn like recurrent weights (uniform on +-1/sqrt(q) with
  /// q = input_dim - 1), leaves uniform on [-0.1, 0.1].
  static SoftTree random(std::size_t depth, std::size_t input_dim, std::size_t output_dim,
                         Rng& rng);

  std::size_t depth() const { return topology_.depth(); }
  /// Augmented input length q + 1.
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  std::size_t num_internal() const { return topology_.num_internal(); }
  std::size_t num_leaves() const { return topology_.num_leaves(); }
  const TreeTopology& topology() const { return topology_; }

  const Vec& hyperplane(std::size_t node) const { return hyperplanes_.at(node); }
  Vec& hyperplane(std::size_t node) { return hyperplanes_.at(node); }
  const Vec& leaf(std::size_t leaf) const { return leaves_.at(leaf); }
  Vec& leaf(std::size_t leaf) { return leaves_.at(leaf); }
  const std::vector<Vec>& hyperplanes() const { return hyperplanes_; }
  const std::vector<Vec>& leaves() const { return leaves_; }

 private:
  TreeTopology topology_;
  std::size_t input_dim_;
  std::size_t output_dim_;
  std::vector<Vec> hyperplanes_;
  std::vector<Vec> leaves_;
};

struct RoutingTrace {
  std::vector<double> left_prob;  // p_m per internal node
  std::vector<double> path_prob;  // pp_l per leaf
};

/// Prepends the constant 1 that carries the node biases.
Vec augment(const Vec& h);

RoutingTrace route(const SoftTree& tree, const Vec& h_aug);
Vec tree_forward(const SoftTree& tree, const RoutingTrace& trace);
Vec tree_forward(const SoftTree& tree, const Vec& h_aug);

/// pp_l, the factor of dE/dphi_l contributed by the tree itself.
double leaf_grad_coeff(const SoftTree& tree, const RoutingTrace& trace, std::size_t leaf);

/// Per internal node m: c_m = sum_{l in D(m)} (phi_l . s) pp_l (1[l in LD(m)] - p_m),
/// the derivative of (output . s) with respect to a_m.
std::vector<double> node_coefficients(const SoftTree& tree, const RoutingTrace& trace,
                                      const Vec& downstream);

/// Gradient of (output . downstream) with respect to every w_m.
std::vector<Vec> hyperplane_grad(const SoftTree& tree, const RoutingTrace& trace,
                                 const Vec& h_aug, const Vec& downstream);

/// Gradient of (output . downstream) with respect to the augmented input,
/// length q + 1. Coordinate 0 belongs to the constant and is dropped by
/// callers before backpropagating further.
Vec input_grad(const SoftTree& tree, const RoutingTrace& trace, const Vec& downstream);

}  // namespace recboost
