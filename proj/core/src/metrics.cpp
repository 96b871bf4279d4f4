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

#include "recboost/metrics.hpp"

#include <cmath>
#include <string>

#include "recboost/error.hpp"

namespace recboost {

Forecast::Forecast(Vec truth_values, Vec predictions)
    : truth(std::move(truth_values)), prediction(std::move(predictions)) {
  if (truth.size() != prediction.size()) {
    throw ShapeError("forecast: " + std::to_string(truth.size()) + " true values vs " +
                     std::to_string(prediction.size()) + " predictions");
  }
  if (truth.empty()) {
    throw DataError("forecast: empty horizon");
  }
}

double mse(const Forecast& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.horizon(); ++i) {
    const double e = f.truth[i] - f.prediction[i];
    acc += e * e;
  }
  return acc / static_cast<double>(f.horizon());
}

double rmse(const Forecast& f) { return std::sqrt(mse(f)); }

double mape(const Forecast& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.horizon(); ++i) {
    if (f.truth[i] == 0.0) {
      throw DataError("mape undefined: true value at step " + std::to_string(i) + " is zero");
    }
    acc += std::abs((f.truth[i] - f.prediction[i]) / f.truth[i]);
  }
  return acc / static_cast<double>(f.horizon());
}

double smape(const Forecast& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.horizon(); ++i) {
    const double denom = std::abs(f.truth[i]) + std::abs(f.prediction[i]);
    if (denom == 0.0) {
      throw DataError("smape undefined: true and predicted values at step " +
                      std::to_string(i) + " are both zero");
    }
    acc += std::abs(f.truth[i] - f.prediction[i]) / denom;
  }
  return 2.0 * acc / static_cast<double>(f.horizon());
}

void CumulativeTracker::add(double truth, double prediction) {
  const double e = truth - prediction;
  sum_ += e * e;
  ++count_;
}

double CumulativeTracker::value() const {
  if (count_ == 0) {
    throw DataError("cumulative error of an empty stream");
  }
  return sum_ / static_cast<double>(count_);
}

double naive_forecast(std::span<const double> history) {
  if (history.empty()) {
    throw DataError("naive forecast needs at least one observation");
  }
  return history.back();
}

Vec naive_forecast(std::span<const double> history, std::size_t horizon) {
  return Vec(horizon, naive_forecast(history));
}

}  // namespace recboost
