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

#include "recboost/softtree.hpp"

#include <cmath>
#include <string>

#include "recboost/error.hpp"

namespace recboost {
namespace {

constexpr std::size_t kMaxDepth = 20;

void check_input(const SoftTree& tree, const Vec& h_aug) {
  if (h_aug.size() != tree.input_dim()) {
    throw ShapeError("soft tree: augmented input length " + std::to_string(h_aug.size()) +
                     ", expected " + std::to_string(tree.input_dim()));
  }
  if (h_aug[0] != 1.0) {
    throw ShapeError("soft tree: augmented input must start with the constant 1");
  }
}

void check_trace(const SoftTree& tree, const RoutingTrace& trace) {
  if (trace.left_prob.size() != tree.num_internal() ||
      trace.path_prob.size() != tree.num_leaves()) {
    throw ShapeError("soft tree: routing trace does not belong to this tree");
  }
}

}  // namespace

TreeTopology::TreeTopology(std::size_t depth) : depth_(depth) {
  if (depth == 0 || depth > kMaxDepth) {
    throw UsageError("tree depth must be in [1, " + std::to_string(kMaxDepth) + "], got " +
                     std::to_string(depth));
  }
  ancestors_.resize(num_leaves());
  for (std::size_t leaf = 0; leaf < num_leaves(); ++leaf) {
    auto& path = ancestors_[leaf];
    std::size_t node = 0;
    for (std::size_t level = 0; level < depth; ++level) {
      // Bits of the leaf index, most significant first, pick the branches.
      const bool left = ((leaf >> (depth - 1 - level)) & 1U) == 0;
      path.push_back({node, left});
      node = 2 * node + (left ? 1 : 2);
    }
  }
}

std::vector<std::size_t> TreeTopology::right_ancestors(std::size_t leaf) const {
  std::vector<std::size_t> out;
  for (const auto& a : ancestors(leaf)) {
    if (!a.went_left) out.push_back(a.node);
  }
  return out;
}

std::vector<std::size_t> TreeTopology::descendants(std::size_t node) const {
  if (node >= num_internal()) {
    throw UsageError("unknown internal node " + std::to_string(node));
  }
  std::vector<std::size_t> out;
  for (std::size_t leaf = 0; leaf < num_leaves(); ++leaf) {
    for (const auto& a : ancestors_[leaf]) {
      if (a.node == node) out.push_back(leaf);
    }
  }
  return out;
}

std::vector<std::size_t> TreeTopology::left_descendants(std::size_t node) const {
  if (node >= num_internal()) {
    throw UsageError("unknown internal node " + std::to_string(node));
  }
  std::vector<std::size_t> out;
  for (std::size_t leaf = 0; leaf < num_leaves(); ++leaf) {
    for (const auto& a : ancestors_[leaf]) {
      if (a.node == node && a.went_left) out.push_back(leaf);
    }
  }
  return out;
}

SoftTree::SoftTree(std::size_t depth, std::size_t input_dim, std::size_t output_dim)
    : topology_(depth), input_dim_(input_dim), output_dim_(output_dim) {
  if (input_dim < 2) {
    throw UsageError("soft tree input must hold the constant plus at least one feature");
  }
  if (output_dim == 0) {
    throw UsageError("soft tree output dimension must be positive");
  }
  hyperplanes_.assign(topology_.num_internal(), Vec(input_dim));
  leaves_.assign(topology_.num_leaves(), Vec(output_dim));
}

SoftTree SoftTree::random(std::size_t depth, std::size_t input_dim, std::size_t output_dim,
                          Rng& rng) {
  SoftTree tree(depth, input_dim, output_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim - 1));
  for (auto& w : tree.hyperplanes_) {
    for (auto& v : w) v = rng.uniform(-bound, bound);
  }
  for (auto& phi : tree.leaves_) {
    for (auto& v : phi) v = rng.uniform(-0.1, 0.1);
  }
  return tree;
}

Vec augment(const Vec& h) { return concat(Vec{1.0}, h); }

RoutingTrace route(const SoftTree& tree, const Vec& h_aug) {
  check_input(tree, h_aug);
  const std::size_t internal = tree.num_internal();
  const auto features = h_aug.span().subspan(1);

  RoutingTrace trace;
  trace.left_prob.resize(internal);
  // Path probability of every heap node; leaves occupy the tail.
  std::vector<double> node_prob(2 * internal + 1);
  node_prob[0] = 1.0;
  for (std::size_t m = 0; m < internal; ++m) {
    const Vec& w = tree.hyperplane(m);
    const double p = sigmoid(w[0] + dot(w.span().subspan(1), features));
    trace.left_prob[m] = p;
    const double left = mul(node_prob[m], p);
    node_prob[2 * m + 1] = left;
    node_prob[2 * m + 2] = node_prob[m] - left;
  }
  trace.path_prob.assign(node_prob.begin() + static_cast<std::ptrdiff_t>(internal),
                         node_prob.end());
  return trace;
}

Vec tree_forward(const SoftTree& tree, const RoutingTrace& trace) {
  check_trace(tree, trace);
  Vec out(tree.output_dim());
  for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
    axpy(trace.path_prob[leaf], tree.leaf(leaf), out);
  }
  return out;
}

Vec tree_forward(const SoftTree& tree, const Vec& h_aug) {
  return tree_forward(tree, route(tree, h_aug));
}

double leaf_grad_coeff(const SoftTree& tree, const RoutingTrace& trace, std::size_t leaf) {
  check_trace(tree, trace);
  if (leaf >= tree.num_leaves()) {
    throw UsageError("unknown leaf " + std::to_string(leaf) + " in a tree with " +
                     std::to_string(tree.num_leaves()) + " leaves");
  }
  return trace.path_prob[leaf];
}

std::vector<double> node_coefficients(const SoftTree& tree, const RoutingTrace& trace,
                                      const Vec& downstream) {
  check_trace(tree, trace);
  if (downstream.size() != tree.output_dim()) {
    throw ShapeError("soft tree: downstream length " + std::to_string(downstream.size()) +
                     ", expected " + std::to_string(tree.output_dim()));
  }
  std::vector<double> coeff(tree.num_internal(), 0.0);
  const auto& topo = tree.topology();
  for (std::size_t leaf = 0; leaf < tree.num_leaves(); ++leaf) {
    const Vec& phi = tree.leaf(leaf);
    double weight = 0.0;
    for (std::size_t k = 0; k < phi.size(); ++k) {
      weight += phi[k] * downstream[k];
    }
    weight *= trace.path_prob[leaf];
    if (weight == 0.0) continue;
    for (const auto& a : topo.ancestors(leaf)) {
      const double indicator = a.went_left ? 1.0 : 0.0;
      coeff[a.node] += weight * (indicator - trace.left_prob[a.node]);
    }
  }
  return coeff;
}

std::vector<Vec> hyperplane_grad(const SoftTree& tree, const RoutingTrace& trace,
                                 const Vec& h_aug, const Vec& downstream) {
  check_input(tree, h_aug);
  const std::vector<double> coeff = node_coefficients(tree, trace, downstream);
  std::vector<Vec> grads;
  grads.reserve(coeff.size());
  for (double c : coeff) {
    Vec g(h_aug.size());
    for (std::size_t k = 0; k < h_aug.size(); ++k) {
      g[k] = c * h_aug[k];
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

Vec input_grad(const SoftTree& tree, const RoutingTrace& trace, const Vec& downstream) {
  const std::vector<double> coeff = node_coefficients(tree, trace, downstream);
  Vec grad(tree.input_dim());
  for (std::size_t m = 0; m < coeff.size(); ++m) {
    const Vec& w = tree.hyperplane(m);
    for (std::size_t k = 0; k < w.size(); ++k) {
      grad[k] += coeff[m] * w[k];
    }
  }
  return grad;
}

}  // namespace recboost
