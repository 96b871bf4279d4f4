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

#include "recboost/numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>

#include "recboost/error.hpp"

namespace recboost {
namespace {

thread_local std::uint64_t* active_counter = nullptr;

inline void count_multiplies(std::uint64_t n) {
  if (active_counter != nullptr) {
    *active_counter += n;
  }
}

std::string vec_shape(const Vec& v) { return "[" + std::to_string(v.size()) + "]"; }

void require_same_size(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": length mismatch " + vec_shape(a) + " vs " +
                     vec_shape(b));
  }
}

}  // namespace

void Vec::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Mat::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
  }
  return m;
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  Mat m(rows.size(), cols);
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != cols) {
      throw ShapeError("Mat::from_rows: ragged rows");
    }
    std::copy(row.begin(), row.end(), m.row(r).begin());
    ++r;
  }
  return m;
}

std::string shape_string(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double tanh_act(double x) { return std::tanh(x); }

ActivationDerivatives act_derivs(double v) { return {v * (1.0 - v), 1.0 - v * v}; }

Vec sigmoid(const Vec& x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = sigmoid(x[i]);
  }
  return out;
}

Vec tanh_act(const Vec& x) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::tanh(x[i]);
  }
  return out;
}

Vec matvec(const Mat& m, const Vec& v) {
  if (m.cols() != v.size()) {
    throw ShapeError("matvec: matrix " + shape_string(m) + " vs vector " + vec_shape(v));
  }
  Vec out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      acc += row[c] * v[c];
    }
    out[r] = acc;
  }
  count_multiplies(m.rows() * m.cols());
  return out;
}

Vec matvec_transposed(const Mat& m, const Vec& v) {
  if (m.rows() != v.size()) {
    throw ShapeError("matvec_transposed: matrix " + shape_string(m) + " vs vector " +
                     vec_shape(v));
  }
  Vec out(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    const double s = v[r];
    for (std::size_t c = 0; c < row.size(); ++c) {
      out[c] += row[c] * s;
    }
  }
  count_multiplies(m.rows() * m.cols());
  return out;
}

Vec hadamard(const Vec& a, const Vec& b) {
  require_same_size(a, b, "hadamard");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] * b[i];
  }
  count_multiplies(a.size());
  return out;
}

Vec add(const Vec& a, const Vec& b) {
  require_same_size(a, b, "add");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] + b[i];
  }
  return out;
}

Vec sub(const Vec& a, const Vec& b) {
  require_same_size(a, b, "sub");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] - b[i];
  }
  return out;
}

Vec scale(const Vec& a, double s) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] * s;
  }
  count_multiplies(a.size());
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length mismatch [" + std::to_string(a.size()) + "] vs [" +
                     std::to_string(b.size()) + "]");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  count_multiplies(a.size());
  return acc;
}

double mul(double a, double b) {
  count_multiplies(1);
  return a * b;
}

void axpy(double s, const Vec& x, Vec& y) {
  require_same_size(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] += s * x[i];
  }
  count_multiplies(x.size());
}

void add_outer(const Vec& a, const Vec& b, Mat& m) {
  if (m.rows() != a.size() || m.cols() != b.size()) {
    throw ShapeError("add_outer: matrix " + shape_string(m) + " vs outer " + vec_shape(a) +
                     vec_shape(b));
  }
  for (std::size_t r = 0; r < a.size(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < b.size(); ++c) {
      row[c] += a[r] * b[c];
    }
  }
  count_multiplies(a.size() * b.size());
}

Vec concat(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  std::copy(a.begin(), a.end(), out.begin());
  std::copy(b.begin(), b.end(), out.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

double squared_norm(const Vec& a) {
  double acc = 0.0;
  for (double v : a) {
    acc += v * v;
  }
  return acc;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_hex(double v) {
  if (!std::isfinite(v)) return format_real(v);
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), std::abs(v), std::chars_format::hex);
  return (std::signbit(v) ? "-0x" : "0x") + std::string(buf, res.ptr);
}

double parse_real(std::string_view text) {
  const std::string shown(text);
  bool negative = false;
  std::string_view body = text;
  if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
    negative = body.front() == '-';
    body.remove_prefix(1);
  }
  double v = 0.0;
  std::from_chars_result res{};
  if (body.size() > 2 && body[0] == '0' && (body[1] == 'x' || body[1] == 'X')) {
    body.remove_prefix(2);
    res = std::from_chars(body.data(), body.data() + body.size(), v, std::chars_format::hex);
  } else {
    res = std::from_chars(body.data(), body.data() + body.size(), v);
  }
  if (body.empty() || body.front() == '-' || body.front() == '+' || res.ec != std::errc() ||
      res.ptr != body.data() + body.size()) {
    throw DataError("not a number: '" + shown + "'");
  }
  return negative ? -v : v;
}

MultiplyCounter::MultiplyCounter() : previous_(active_counter) { active_counter = &count_; }

MultiplyCounter::~MultiplyCounter() { active_counter = previous_; }

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) {
    throw UsageError("Rng::index: empty range");
  }
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t draw = engine_();
  while (draw >= limit) {
    draw = engine_();
  }
  return static_cast<std::size_t>(draw % bound);
}

Vec random_uniform(Rng& rng, std::size_t n, double lo, double hi) {
  Vec out(n);
  for (auto& v : out) {
    v = rng.uniform(lo, hi);
  }
  return out;
}

Mat random_uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Mat out(rows, cols);
  for (auto& v : out.span()) {
    v = rng.uniform(lo, hi);
  }
  return out;
}

}  // namespace recboost
