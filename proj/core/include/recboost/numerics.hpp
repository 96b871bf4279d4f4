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

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace recboost {

/// Dense vector of doubles.
class Vec {
 public:
  Vec() = default;
  explicit Vec(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vec(std::initializer_list<double> values) : data_(values) {}
  explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(double value);

  friend bool operator==(const Vec&, const Vec&) = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat identity(std::size_t n);
  /// Builds a matrix from nested rows; every row must have the same length.
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  void fill(double value);

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Mat& m);

// Activations. Overflow-safe for any finite input.
double sigmoid(double x);
double tanh_act(double x);

struct ActivationDerivatives {
  double dsigmoid;
  double dtanh;
};

/// Derivatives written in terms of an already-activated value `v`:
/// sigma' = v(1 - v) when v = sigma(x), tanh' = 1 - v^2 when v = tanh(x).
ActivationDerivatives act_derivs(double v);

Vec sigmoid(const Vec& x);
Vec tanh_act(const Vec& x);

// Arithmetic. Every operation checks shapes and throws ShapeError naming
// both operands on mismatch.
Vec matvec(const Mat& m, const Vec& v);
/// m^T v.
Vec matvec_transposed(const Mat& m, const Vec& v);
Vec hadamard(const Vec& a, const Vec& b);
Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec scale(const Vec& a, double s);
double dot(std::span<const double> a, std::span<const double> b);
double mul(double a, double b);
/// y += s * x.
void axpy(double s, const Vec& x, Vec& y);
/// m += a b^T.
void add_outer(const Vec& a, const Vec& b, Mat& m);
/// Concatenation {a, b}.
Vec concat(const Vec& a, const Vec& b);
double squared_norm(const Vec& a);
bool all_finite(std::span<const double> values);

/// Shortest decimal text that reads back to the same double.
std::string format_real(double v);
/// Lossless hexadecimal text such as "0x1.8p+1" or "-0x1p-3".
std::string format_hex(double v);
/// Reads decimal or "0x" hexadecimal text; the whole string must be consumed.
/// Throws DataError otherwise.
double parse_real(std::string_view text);

/// Counts scalar multiplications performed by the arithmetic helpers above on
/// the current thread while alive. Scopes nest; the innermost one receives
/// the counts.
class MultiplyCounter {
 public:
  MultiplyCounter();
  ~MultiplyCounter();
  MultiplyCounter(const MultiplyCounter&) = delete;
  MultiplyCounter& operator=(const MultiplyCounter&) = delete;

  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_ = 0;
  std::uint64_t* previous_ = nullptr;
};

/// Seedable random source. The engine is std::mt19937_64, whose output
/// sequence is fixed by the C++ standard; the distributions are implemented
/// here rather than taken from <random> because the standard leaves their
/// algorithms to the implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via the Box-Muller transform.
  double normal();
  /// Uniform on {0, ..., n - 1}; n must be positive.
  std::size_t index(std::size_t n);
  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

Vec random_uniform(Rng& rng, std::size_t n, double lo, double hi);
Mat random_uniform(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi);

}  // namespace recboost
