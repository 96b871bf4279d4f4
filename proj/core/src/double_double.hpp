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

// Double-double arithmetic: a value is the unevaluated sum hi + lo of two
// doubles with |lo| <= ulp(hi) / 2, giving about 106 significant bits. Only
// what the gradient-check reference pass needs is provided.

#pragma once

#include <cmath>

namespace recboost::detail {

class DoubleDouble {
 public:
  constexpr DoubleDouble() = default;
  constexpr DoubleDouble(double v) : hi_(v) {}  // NOLINT(google-explicit-constructor)
  constexpr DoubleDouble(double hi, double lo) : hi_(hi), lo_(lo) {}

  double hi() const { return hi_; }
  double lo() const { return lo_; }
  explicit operator double() const { return hi_ + lo_; }

  friend DoubleDouble operator+(DoubleDouble a, DoubleDouble b) {
    double s = 0.0;
    double e = two_sum(a.hi_, b.hi_, s);
    double t = 0.0;
    const double f = two_sum(a.lo_, b.lo_, t);
    e += t;
    DoubleDouble r = quick_two_sum(s, e);
    e = f + r.lo_;
    return quick_two_sum(r.hi_, e);
  }
  friend DoubleDouble operator-(DoubleDouble a) { return {-a.hi_, -a.lo_}; }
  friend DoubleDouble operator-(DoubleDouble a, DoubleDouble b) { return a + (-b); }
  friend DoubleDouble operator*(DoubleDouble a, DoubleDouble b) {
    const double p = a.hi_ * b.hi_;
    double e = std::fma(a.hi_, b.hi_, -p);
    e += a.hi_ * b.lo_ + a.lo_ * b.hi_;
    return quick_two_sum(p, e);
  }
  friend DoubleDouble operator/(DoubleDouble a, DoubleDouble b) {
    const double q1 = a.hi_ / b.hi_;
    DoubleDouble r = a - b * DoubleDouble(q1);
    const double q2 = r.hi_ / b.hi_;
    r = r - b * DoubleDouble(q2);
    const double q3 = r.hi_ / b.hi_;
    return quick_two_sum(q1, q2) + DoubleDouble(q3);
  }
  DoubleDouble& operator+=(DoubleDouble b) { return *this = *this + b; }
  DoubleDouble& operator-=(DoubleDouble b) { return *this = *this - b; }
  DoubleDouble& operator*=(DoubleDouble b) { return *this = *this * b; }
  DoubleDouble& operator/=(DoubleDouble b) { return *this = *this / b; }

  friend bool operator<(DoubleDouble a, DoubleDouble b) {
    return a.hi_ < b.hi_ || (a.hi_ == b.hi_ && a.lo_ < b.lo_);
  }

  friend DoubleDouble ldexp(DoubleDouble a, int k) {
    return {std::ldexp(a.hi_, k), std::ldexp(a.lo_, k)};
  }

  // exp(a) = 2^k exp(r) with r = a - k ln 2, evaluated as ((1 + s)^2)^10
  // where s = expm1(r / 1024) comes from a short Taylor series.
  friend DoubleDouble exp(DoubleDouble a) {
    if (a.hi_ > 709.0) return {HUGE_VAL, 0.0};
    if (a.hi_ < -745.0) return {0.0, 0.0};
    const DoubleDouble ln2(6.931471805599452862e-01, 2.319046813846299558e-17);
    const double k = std::nearbyint(a.hi_ / ln2.hi_);
    const DoubleDouble r = ldexp(a - ln2 * DoubleDouble(k), -10);
    // Horner form of r + r^2/2! + ... + r^11/11!.
    static const auto inverse = [] {
      struct Table {
        DoubleDouble v[12];
      } t;
      for (int n = 1; n < 12; ++n) t.v[n] = DoubleDouble(1.0) / DoubleDouble(static_cast<double>(n));
      return t;
    }();
    DoubleDouble s = r * inverse.v[11];
    for (int n = 10; n >= 1; --n) s = r * inverse.v[n] * (DoubleDouble(1.0) + s);
    for (int i = 0; i < 10; ++i) s = ldexp(s, 1) + s * s;
    return ldexp(s + DoubleDouble(1.0), static_cast<int>(k));
  }

 private:
  static double two_sum(double a, double b, double& s) {
    s = a + b;
    const double bb = s - a;
    return (a - (s - bb)) + (b - bb);
  }
  static DoubleDouble quick_two_sum(double a, double b) {
    const double s = a + b;
    return {s, b - (s - a)};
  }

  double hi_ = 0.0;
  double lo_ = 0.0;
};

inline DoubleDouble sigmoid(DoubleDouble x) {
  return DoubleDouble(1.0) / (DoubleDouble(1.0) + exp(-x));
}

inline DoubleDouble tanh(DoubleDouble x) {
  // Written with a decaying exponential on either side of zero.
  if (x < DoubleDouble(0.0)) return -tanh(-x);
  const DoubleDouble e = exp(ldexp(-x, 1));
  return (DoubleDouble(1.0) - e) / (DoubleDouble(1.0) + e);
}

}  // namespace recboost::detail
