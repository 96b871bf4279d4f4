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

#include "recboost/recurrent.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <string>

#include "recboost/error.hpp"

namespace recboost {
namespace {

constexpr std::array<std::string_view, 4> kLstmGates = {"f", "i", "c", "o"};
constexpr std::array<std::string_view, 3> kGruGates = {"z", "r", "h"};

enum LstmGate : std::size_t { kForget = 0, kInput = 1, kBlock = 2, kOutput = 3 };
enum GruGate : std::size_t { kUpdate = 0, kReset = 1, kCandidate = 2 };

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

Vec head(const Vec& v, std::size_t n) {
  return Vec(std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n)));
}

Vec tail(const Vec& v, std::size_t from) {
  return Vec(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(from), v.end()));
}

void accumulate(Vec& into, const Vec& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    into[i] += v[i];
  }
}

struct StepBackward {
  Vec dh_prev;
  Vec dc_prev;
  Vec dx;
};

StepBackward lstm_step_backward(const RecurrentParams& p, const StepTrace& s, const Vec& dh,
                                const Vec& dc_next, RecurrentGradients& g) {
  const std::size_t q = p.hidden_dim;
  const Vec& f = s.gates[kForget];
  const Vec& in = s.gates[kInput];
  const Vec& cand = s.gates[kBlock];
  const Vec& o = s.gates[kOutput];

  std::array<Vec, 4> da{Vec(q), Vec(q), Vec(q), Vec(q)};
  Vec dc(q);
  for (std::size_t k = 0; k < q; ++k) {
    const double tc = std::tanh(s.c[k]);
    da[kOutput][k] = dh[k] * tc * act_derivs(o[k]).dsigmoid;
    dc[k] = dh[k] * o[k] * act_derivs(tc).dtanh + dc_next[k];
    da[kForget][k] = dc[k] * s.c_prev[k] * act_derivs(f[k]).dsigmoid;
    da[kInput][k] = dc[k] * cand[k] * act_derivs(in[k]).dsigmoid;
    da[kBlock][k] = dc[k] * in[k] * act_derivs(cand[k]).dtanh;
  }

  const Vec stacked = concat(s.h_prev, s.x);
  Vec dstacked(stacked.size());
  for (std::size_t gate = 0; gate < 4; ++gate) {
    add_outer(da[gate], stacked, g.gate_weights[gate]);
    accumulate(g.gate_biases[gate], da[gate]);
    accumulate(dstacked, matvec_transposed(p.gate_weights[gate], da[gate]));
  }

  StepBackward out;
  out.dh_prev = head(dstacked, q);
  out.dx = tail(dstacked, q);
  out.dc_prev = hadamard(dc, f);
  return out;
}

StepBackward gru_step_backward(const RecurrentParams& p, const StepTrace& s, const Vec& dh,
                               RecurrentGradients& g) {
  const std::size_t q = p.hidden_dim;
  const Vec& z = s.gates[kUpdate];
  const Vec& r = s.gates[kReset];
  const Vec& cand = s.gates[kCandidate];

  Vec da_z(q);
  Vec da_h(q);
  Vec dh_prev(q);
  for (std::size_t k = 0; k < q; ++k) {
    da_z[k] = dh[k] * (cand[k] - s.h_prev[k]) * act_derivs(z[k]).dsigmoid;
    da_h[k] = dh[k] * z[k] * act_derivs(cand[k]).dtanh;
    dh_prev[k] = dh[k] * (1.0 - z[k]);
  }

  const Vec reset_hidden = hadamard(r, s.h_prev);
  add_outer(da_h, concat(reset_hidden, s.x), g.gate_weights[kCandidate]);
  accumulate(g.gate_biases[kCandidate], da_h);
  const Vec d_candidate_in = matvec_transposed(p.gate_weights[kCandidate], da_h);

  Vec da_r(q);
  for (std::size_t k = 0; k < q; ++k) {
    const double d_reset_hidden = d_candidate_in[k];
    da_r[k] = d_reset_hidden * s.h_prev[k] * act_derivs(r[k]).dsigmoid;
    dh_prev[k] += d_reset_hidden * r[k];
  }

  const Vec stacked = concat(s.h_prev, s.x);
  add_outer(da_z, stacked, g.gate_weights[kUpdate]);
  accumulate(g.gate_biases[kUpdate], da_z);
  add_outer(da_r, stacked, g.gate_weights[kReset]);
  accumulate(g.gate_biases[kReset], da_r);

  Vec dstacked = matvec_transposed(p.gate_weights[kUpdate], da_z);
  accumulate(dstacked, matvec_transposed(p.gate_weights[kReset], da_r));

  StepBackward out;
  out.dh_prev = add(dh_prev, head(dstacked, q));
  out.dx = add(tail(dstacked, q), tail(d_candidate_in, q));
  return out;
}

// Backward through one layer given per-step seeds dE/dh_t arriving from
// above (pooling or the next layer). Returns dE/dx_t per step.
std::vector<Vec> layer_backward(const RecurrentParams& p, const CellTrace& trace,
                                const std::vector<Vec>& seeds, RecurrentGradients& grads) {
  const std::size_t q = p.hidden_dim;
  std::vector<Vec> dx(trace.size());
  Vec dh_carry(q);
  Vec dc_carry(q);
  for (std::size_t t = trace.size(); t-- > 0;) {
    const Vec dh = add(seeds[t], dh_carry);
    if (p.kind == CellKind::kLstm) {
      StepBackward step = lstm_step_backward(p, trace[t], dh, dc_carry, grads);
      dh_carry = std::move(step.dh_prev);
      dc_carry = std::move(step.dc_prev);
      dx[t] = std::move(step.dx);
    } else {
      StepBackward step = gru_step_backward(p, trace[t], dh, grads);
      dh_carry = std::move(step.dh_prev);
      dx[t] = std::move(step.dx);
    }
  }
  return dx;
}

}  // namespace

std::string_view to_string(CellKind kind) { return kind == CellKind::kLstm ? "lstm" : "gru"; }

std::string_view to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::kLast:
      return "last";
    case Pooling::kMean:
      return "mean";
    case Pooling::kMax:
      return "max";
  }
  return "last";
}

CellKind parse_cell_kind(std::string_view text) {
  const std::string t = lower(text);
  if (t == "lstm") return CellKind::kLstm;
  if (t == "gru") return CellKind::kGru;
  throw UsageError("unknown cell kind '" + std::string(text) + "' (expected lstm or gru)");
}

Pooling parse_pooling(std::string_view text) {
  const std::string t = lower(text);
  if (t == "last") return Pooling::kLast;
  if (t == "mean") return Pooling::kMean;
  if (t == "max") return Pooling::kMax;
  throw UsageError("unknown pooling '" + std::string(text) + "' (expected last, mean or max)");
}

std::size_t gate_count(CellKind kind) { return kind == CellKind::kLstm ? 4 : 3; }

std::span<const std::string_view> gate_names(CellKind kind) {
  if (kind == CellKind::kLstm) return kLstmGates;
  return kGruGates;
}

RecurrentParams RecurrentParams::zeros(CellKind kind, std::size_t input_dim,
                                       std::size_t hidden_dim) {
  if (input_dim == 0 || hidden_dim == 0) {
    throw UsageError("recurrent layer dimensions must be positive");
  }
  RecurrentParams p;
  p.kind = kind;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (std::size_t g = 0; g < gate_count(kind); ++g) {
    p.gate_weights.emplace_back(hidden_dim, hidden_dim + input_dim);
    p.gate_biases.emplace_back(hidden_dim);
  }
  return p;
}

RecurrentParams RecurrentParams::random(CellKind kind, std::size_t input_dim,
                                        std::size_t hidden_dim, Rng& rng) {
  RecurrentParams p = zeros(kind, input_dim, hidden_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  for (auto& w : p.gate_weights) {
    for (auto& v : w.span()) {
      v = rng.uniform(-bound, bound);
    }
  }
  return p;
}

void RecurrentParams::validate() const {
  const std::size_t gates = gate_count(kind);
  if (gate_weights.size() != gates || gate_biases.size() != gates) {
    throw ShapeError(std::string(to_string(kind)) + " layer needs " + std::to_string(gates) +
                     " gates, got " + std::to_string(gate_weights.size()) + " weights and " +
                     std::to_string(gate_biases.size()) + " biases");
  }
  for (std::size_t g = 0; g < gates; ++g) {
    if (gate_weights[g].rows() != hidden_dim || gate_weights[g].cols() != hidden_dim + input_dim) {
      throw ShapeError("gate " + std::string(gate_names(kind)[g]) + " weight is " +
                       shape_string(gate_weights[g]) + ", expected " +
                       std::to_string(hidden_dim) + "x" + std::to_string(hidden_dim + input_dim));
    }
    if (gate_biases[g].size() != hidden_dim) {
      throw ShapeError("gate " + std::string(gate_names(kind)[g]) + " bias has length " +
                       std::to_string(gate_biases[g].size()) + ", expected " +
                       std::to_string(hidden_dim));
    }
  }
}

RecurrentGradients RecurrentGradients::zeros_like(const RecurrentParams& params) {
  RecurrentGradients g;
  for (const auto& w : params.gate_weights) {
    g.gate_weights.emplace_back(w.rows(), w.cols());
  }
  for (const auto& b : params.gate_biases) {
    g.gate_biases.emplace_back(b.size());
  }
  return g;
}

StepTrace cell_forward(const RecurrentParams& params, const Vec& x, const Vec& h_prev,
                       const std::optional<Vec>& c_prev) {
  const std::size_t q = params.hidden_dim;
  if (x.size() != params.input_dim) {
    throw ShapeError("cell_forward: input length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(params.input_dim));
  }
  if (h_prev.size() != q) {
    throw ShapeError("cell_forward: hidden length " + std::to_string(h_prev.size()) +
                     ", expected " + std::to_string(q));
  }
  const bool lstm = params.kind == CellKind::kLstm;
  if (lstm != c_prev.has_value()) {
    throw ShapeError(lstm ? "cell_forward: LSTM step needs a previous cell state"
                          : "cell_forward: GRU step takes no cell state");
  }
  if (lstm && c_prev->size() != q) {
    throw ShapeError("cell_forward: cell state length " + std::to_string(c_prev->size()) +
                     ", expected " + std::to_string(q));
  }

  StepTrace s;
  s.x = x;
  s.h_prev = h_prev;
  const Vec stacked = concat(h_prev, x);
  if (lstm) {
    s.c_prev = *c_prev;
    const auto& w = params.gate_weights;
    const auto& b = params.gate_biases;
    s.gates.resize(4);
    s.gates[kForget] = sigmoid(add(matvec(w[kForget], stacked), b[kForget]));
    s.gates[kInput] = sigmoid(add(matvec(w[kInput], stacked), b[kInput]));
    s.gates[kBlock] = tanh_act(add(matvec(w[kBlock], stacked), b[kBlock]));
    s.gates[kOutput] = sigmoid(add(matvec(w[kOutput], stacked), b[kOutput]));
    s.c = add(hadamard(s.gates[kForget], s.c_prev), hadamard(s.gates[kInput], s.gates[kBlock]));
    s.h = hadamard(s.gates[kOutput], tanh_act(s.c));
  } else {
    const auto& w = params.gate_weights;
    const auto& b = params.gate_biases;
    s.gates.resize(3);
    s.gates[kUpdate] = sigmoid(add(matvec(w[kUpdate], stacked), b[kUpdate]));
    s.gates[kReset] = sigmoid(add(matvec(w[kReset], stacked), b[kReset]));
    const Vec reset_stacked = concat(hadamard(s.gates[kReset], h_prev), x);
    s.gates[kCandidate] = tanh_act(add(matvec(w[kCandidate], reset_stacked), b[kCandidate]));
    Vec keep(q);
    for (std::size_t k = 0; k < q; ++k) {
      keep[k] = 1.0 - s.gates[kUpdate][k];
    }
    s.h = add(hadamard(keep, h_prev), hadamard(s.gates[kUpdate], s.gates[kCandidate]));
  }
  return s;
}

RecurrentStack::RecurrentStack(std::vector<RecurrentParams> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) {
    throw ShapeError("recurrent stack needs at least one layer");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].validate();
    if (layers_[l].kind != layers_.front().kind) {
      throw ShapeError("recurrent stack mixes cell kinds at layer " + std::to_string(l));
    }
    if (l > 0 && layers_[l].input_dim != layers_[l - 1].hidden_dim) {
      throw ShapeError("layer " + std::to_string(l) + " input_dim " +
                       std::to_string(layers_[l].input_dim) + " does not match layer " +
                       std::to_string(l - 1) + " hidden_dim " +
                       std::to_string(layers_[l - 1].hidden_dim));
    }
  }
}

RecurrentStack RecurrentStack::random(CellKind kind, std::size_t input_dim,
                                      std::size_t hidden_dim, std::size_t num_layers, Rng& rng) {
  if (num_layers == 0) {
    throw UsageError("recurrent stack needs at least one layer");
  }
  std::vector<RecurrentParams> layers;
  for (std::size_t l = 0; l < num_layers; ++l) {
    layers.push_back(RecurrentParams::random(kind, l == 0 ? input_dim : hidden_dim, hidden_dim, rng));
  }
  return RecurrentStack(std::move(layers));
}

std::vector<Vec> SequenceTrace::top_hiddens() const {
  std::vector<Vec> out;
  out.reserve(layers.back().size());
  for (const auto& step : layers.back()) {
    out.push_back(step.h);
  }
  return out;
}

SequenceTrace forward_sequence(const RecurrentStack& stack, std::span<const Vec> window) {
  if (window.empty()) {
    throw ShapeError("forward_sequence: empty window");
  }
  SequenceTrace trace;
  trace.layers.reserve(stack.num_layers());
  std::vector<Vec> inputs(window.begin(), window.end());
  for (const auto& layer : stack.layers()) {
    const std::size_t q = layer.hidden_dim;
    const bool lstm = layer.kind == CellKind::kLstm;
    CellTrace cells;
    cells.reserve(inputs.size());
    Vec h(q);
    std::optional<Vec> c;
    if (lstm) c = Vec(q);
    for (const auto& x : inputs) {
      StepTrace step = cell_forward(layer, x, h, c);
      h = step.h;
      if (lstm) c = step.c;
      cells.push_back(std::move(step));
    }
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      inputs[t] = cells[t].h;
    }
    trace.layers.push_back(std::move(cells));
  }
  return trace;
}

PooledFeature pool(std::span<const Vec> hiddens, Pooling method) {
  if (hiddens.empty()) {
    throw ShapeError("pool: empty hidden-state list");
  }
  const std::size_t q = hiddens.front().size();
  for (const auto& h : hiddens) {
    if (h.size() != q) {
      throw ShapeError("pool: hidden states of unequal length");
    }
  }
  PooledFeature out;
  out.method = method;
  out.steps = hiddens.size();
  switch (method) {
    case Pooling::kLast:
      out.value = hiddens.back();
      break;
    case Pooling::kMean: {
      out.value = Vec(q);
      for (const auto& h : hiddens) {
        accumulate(out.value, h);
      }
      const double inv = 1.0 / static_cast<double>(hiddens.size());
      for (auto& v : out.value) {
        v *= inv;
      }
      break;
    }
    case Pooling::kMax:
      out.value = hiddens.front();
      out.argmax.assign(q, 0);
      for (std::size_t t = 1; t < hiddens.size(); ++t) {
        for (std::size_t k = 0; k < q; ++k) {
          if (hiddens[t][k] > out.value[k]) {
            out.value[k] = hiddens[t][k];
            out.argmax[k] = t;
          }
        }
      }
      break;
  }
  return out;
}

StackGradients bptt(const RecurrentStack& stack, const SequenceTrace& trace,
                    const Vec& grad_pooled, const PooledFeature& pooled) {
  if (trace.layers.size() != stack.num_layers()) {
    throw ShapeError("bptt: trace has " + std::to_string(trace.layers.size()) +
                     " layers, stack has " + std::to_string(stack.num_layers()));
  }
  const std::size_t steps = trace.layers.back().size();
  for (const auto& cells : trace.layers) {
    if (cells.size() != steps || steps == 0) {
      throw ShapeError("bptt: incomplete trace");
    }
  }
  if (pooled.steps != steps) {
    throw ShapeError("bptt: pooled feature covers " + std::to_string(pooled.steps) +
                     " steps, trace has " + std::to_string(steps));
  }
  const std::size_t q = stack.hidden_dim();
  if (grad_pooled.size() != q) {
    throw ShapeError("bptt: pooled gradient length " + std::to_string(grad_pooled.size()) +
                     ", expected " + std::to_string(q));
  }

  std::vector<Vec> seeds(steps, Vec(q));
  switch (pooled.method) {
    case Pooling::kLast:
      seeds.back() = grad_pooled;
      break;
    case Pooling::kMean: {
      const Vec share = scale(grad_pooled, 1.0 / static_cast<double>(steps));
      std::fill(seeds.begin(), seeds.end(), share);
      break;
    }
    case Pooling::kMax:
      if (pooled.argmax.size() != q) {
        throw ShapeError("bptt: max pooling without argmax indices");
      }
      for (std::size_t k = 0; k < q; ++k) {
        seeds[pooled.argmax[k]][k] = grad_pooled[k];
      }
      break;
  }

  StackGradients out;
  out.layers.resize(stack.num_layers());
  for (std::size_t l = stack.num_layers(); l-- > 0;) {
    const auto& params = stack.layer(l);
    out.layers[l] = RecurrentGradients::zeros_like(params);
    seeds = layer_backward(params, trace.layers[l], seeds, out.layers[l]);
  }
  out.input_grads = std::move(seeds);
  return out;
}

}  // namespace recboost
