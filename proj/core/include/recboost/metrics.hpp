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
#include <span>
#include <vector>

#include "recboost/numerics.hpp"

namespace recboost {

/// True values and predictions over a horizon of equal length.
struct Forecast {
  Vec truth;
  Vec prediction;

  Forecast(Vec truth, Vec prediction);
  std::size_t horizon() const { return truth.size(); }
};

double mse(const Forecast& f);
double rmse(const Forecast& f);
/// Mean of |d - d^| / |d|. Throws DataError if any true value is zero.
double mape(const Forecast& f);
/// Mean of 2 |d - d^| / (|d| + |d^|), in [0, 2]. Throws DataError if both
/// values of a step are zero.
double smape(const Forecast& f);

/// Running mean of squared errors: after n errors, value() is their sum / n.
class CumulativeTracker {
 public:
  void add(double truth, double prediction);
  double value() const;
  std::size_t count() const { return count_; }
  double sum() const { return sum_; }

 private:
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

/// Last observed value; throws DataError on empty history.
double naive_forecast(std::span<const double> history);
/// The last observed value repeated `horizon` times.
Vec naive_forecast(std::span<const double> history, std::size_t horizon);

}  // namespace recboost
