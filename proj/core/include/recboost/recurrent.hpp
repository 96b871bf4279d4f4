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

// LSTM and GRU feature extractors with full backpropagation through time.
//
// Every gate g owns a stacked weight matrix W_g of shape q x (q + m) whose
// left q x q block multiplies the previous hidden state and whose right
// q x m block multiplies the input, plus a bias b_g of length q.
//
//   LSTM (gates f, i, c, o):
//     f = sigma(W_f {h', x} + b_f)    i = sigma(W_i {h', x} + b_i)
//     c~ = tanh(W_c {h', x} + b_c)    o = sigma(W_o {h', x} + b_o)
//     c = f . c' + i . c~             h = o . tanh(c)
//
//   GRU (gates z, r, h):
//     z = sigma(W_z {h', x} + b_z)    r = sigma(W_r {h', x} + b_r)
//     h~ = tanh(W_h {r . h', x} + b_h)
//     h = (1 - z) . h' + z . h~
//
// The backward pass carries both dE/dh and, for the LSTM, dE/dc across time
// steps: c_t depends on c_{t-1} directly through f_t . c_{t-1}, so dropping
// the cell-state carry gives gradients that disagree with finite differences
// whenever T > 1.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "recboost/numerics.hpp"

namespace recboost {

enum class CellKind { kLstm, kGru };
enum class Pooling { kLast, kMean, kMax };

std::string_view to_string(CellKind kind);
std::string_view to_string(Pooling pooling);
/// Accepts "lstm"/"gru" case-insensitively; throws UsageError otherwise.
CellKind parse_cell_kind(std::string_view text);
/// Accepts "last"/"mean"/"max" case-insensitively; throws UsageError otherwise.
Pooling parse_pooling(std::string_view text);

std::size_t gate_count(CellKind kind);
/// Single-letter gate names in storage order: f, i, c, o or z, r, h.
std::span<const std::string_view> gate_names(CellKind kind);

struct RecurrentParams {
  CellKind kind = CellKind::kLstm;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::vector<Mat> gate_weights;
  std::vector<Vec> gate_biases;

  static RecurrentParams zeros(CellKind kind, std::size_t input_dim, std::size_t hidden_dim);
  /// Weights uniform on [-1/sqrt(q), 1/sqrt(q)], biases zero.
  static RecurrentParams random(CellKind kind, std::size_t input_dim, std::size_t hidden_dim,
                                Rng& rng);

  /// Throws ShapeError unless gate count and every shape match kind and dims.
  void validate() const;
};

/// Gradients shaped exactly like the RecurrentParams they belong to.
struct RecurrentGradients {
  std::vector<Mat> gate_weights;
  std::vector<Vec> gate_biases;

  static RecurrentGradients zeros_like(const RecurrentParams& params);
};

/// Everything one cell step needs for its backward pass.
struct StepTrace {
  Vec x;
  Vec h_prev;
  Vec c_prev;  // empty for GRU
  std::vector<Vec> gates;  // activations in gate_names order
  Vec c;  // empty for GRU
  Vec h;
};

using CellTrace = std::vector<StepTrace>;

/// One LSTM or GRU step. `c_prev` must be present exactly for the LSTM.
StepTrace cell_forward(const RecurrentParams& params, const Vec& x, const Vec& h_prev,
                       const std::optional<Vec>& c_prev);

/// A stack of layers whose dimensions chain: layer l consumes the hidden
/// states of layer l - 1. All layers share one cell kind.
class RecurrentStack {
 public:
  RecurrentStack() = default;
  /// Throws ShapeError when the layers do not chain or are inconsistent.
  explicit RecurrentStack(std::vector<RecurrentParams> layers);

  static RecurrentStack random(CellKind kind, std::size_t input_dim, std::size_t hidden_dim,
                               std::size_t num_layers, Rng& rng);

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t input_dim() const { return layers_.front().input_dim; }
  std::size_t hidden_dim() const { return layers_.back().hidden_dim; }
  CellKind kind() const { return layers_.front().kind; }

  const std::vector<RecurrentParams>& layers() const { return layers_; }
  const RecurrentParams& layer(std::size_t i) const { return layers_[i]; }
  /// Mutable access for parameter updates; shapes must not be changed.
  RecurrentParams& mutable_layer(std::size_t i) { return layers_[i]; }

 private:
  std::vector<RecurrentParams> layers_;
};

struct SequenceTrace {
  std::vector<CellTrace> layers;

  /// Hidden states h_1..h_T of the top layer.
  std::vector<Vec> top_hiddens() const;
};

/// Unrolls every layer over the window from h_0 = c_0 = 0.
SequenceTrace forward_sequence(const RecurrentStack& stack, std::span<const Vec> window);

struct PooledFeature {
  Vec value;
  Pooling method = Pooling::kLast;
  std::size_t steps = 0;
  /// For max pooling: per coordinate, the first time index attaining the max.
  std::vector<std::size_t> argmax;
};

PooledFeature pool(std::span<const Vec> hiddens, Pooling method);

struct StackGradients {
  std::vector<RecurrentGradients> layers;
  /// dE/dx_t for the bottom layer's inputs.
  std::vector<Vec> input_grads;
};

/// Backpropagation through time from dE/d(pooled feature) into every layer.
StackGradients bptt(const RecurrentStack& stack, const SequenceTrace& trace,
                    const Vec& grad_pooled, const PooledFeature& pooled);

}  // namespace recboost
