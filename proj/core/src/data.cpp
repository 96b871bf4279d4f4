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

#include "recboost/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "recboost/boosting.hpp"
#include "recboost/error.hpp"

namespace recboost {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record; double-quoted fields may contain commas and "".
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (*begin == '+') ++begin;
  const auto result = std::from_chars(begin, end, out);
  return result.ec == std::errc() && result.ptr == end && std::isfinite(out);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ", ";
    out += items[i];
  }
  return out;
}

struct FixedNetwork {
  RecurrentStack extractor;
  SoftGBDT gbdt;
};

double gbdt_target(const SoftGBDT& gbdt, const Vec& feature) {
  return gbdt_forward(gbdt, augment(feature)).prediction[0];
}

std::vector<Vec> normal_rows(Rng& rng, std::size_t count, std::size_t dim) {
  std::vector<Vec> rows(count, Vec(dim));
  for (auto& row : rows) {
    for (auto& v : row) v = rng.normal();
  }
  return rows;
}

}  // namespace

Vec SeriesFrame::features(std::size_t t) const {
  Vec row(feature_dim());
  row[0] = target.at(t);
  if (!side_info.empty()) {
    std::copy(side_info[t].begin(), side_info[t].end(), row.begin() + 1);
  }
  return row;
}

std::vector<Vec> SeriesFrame::feature_rows() const {
  std::vector<Vec> rows;
  rows.reserve(size());
  for (std::size_t t = 0; t < size(); ++t) rows.push_back(features(t));
  return rows;
}

SeriesFrame SeriesFrame::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) {
    throw DataError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") outside a series of length " + std::to_string(size()));
  }
  SeriesFrame out;
  out.name = name;
  out.target_name = target_name;
  out.side_names = side_names;
  out.target.assign(target.begin() + static_cast<std::ptrdiff_t>(begin),
                    target.begin() + static_cast<std::ptrdiff_t>(end));
  if (!side_info.empty()) {
    out.side_info.assign(side_info.begin() + static_cast<std::ptrdiff_t>(begin),
                         side_info.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void SeriesFrame::validate() const {
  if (!side_names.empty() && side_info.size() != target.size()) {
    throw DataError("series '" + name + "': " + std::to_string(side_info.size()) +
                    " side-information rows for " + std::to_string(target.size()) + " targets");
  }
  if (side_names.empty() && !side_info.empty()) {
    throw DataError("series '" + name + "': side information without column names");
  }
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (!std::isfinite(target[t])) {
      throw DataError("series '" + name + "': non-finite target at index " + std::to_string(t));
    }
  }
  for (std::size_t t = 0; t < side_info.size(); ++t) {
    if (side_info[t].size() != side_dim() || !all_finite(side_info[t].span())) {
      throw DataError("series '" + name + "': bad side information at index " +
                      std::to_string(t));
    }
  }
}

SeriesFrame load_csv(const std::string& path, const std::string& target_column,
                     const std::vector<std::string>& side_columns) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open '" + path + "'");
  }
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) {
    throw DataError("'" + path + "' is empty (a header row is required)");
  }
  if (!header.empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0) {
    header.front().erase(0, 3);
  }

  auto column_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError("'" + path + "': no column named '" + name +
                      "'; available columns: " + join(header));
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t target_idx = column_index(target_column);
  std::vector<std::size_t> side_idx;
  for (const auto& c : side_columns) side_idx.push_back(column_index(c));

  SeriesFrame frame;
  frame.name = path;
  frame.target_name = target_column;
  frame.side_names = side_columns;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    auto cell = [&](std::size_t idx) -> double {
      if (idx >= cells.size()) {
        throw DataError("'" + path + "' line " + std::to_string(line_no) + ": missing column '" +
                        header[idx] + "'");
      }
      double v = 0.0;
      if (!parse_double(cells[idx], v)) {
        throw DataError("'" + path + "' line " + std::to_string(line_no) + ", column '" +
                        header[idx] + "': not a finite number: '" + cells[idx] + "'");
      }
      return v;
    };
    frame.target.push_back(cell(target_idx));
    if (!side_idx.empty()) {
      Vec side(side_idx.size());
      for (std::size_t k = 0; k < side_idx.size(); ++k) side[k] = cell(side_idx[k]);
      frame.side_info.push_back(std::move(side));
    }
  }
  if (frame.target.empty()) {
    throw DataError("'" + path + "' has a header but no data rows");
  }
  frame.validate();
  return frame;
}

std::vector<Window> make_windows(const SeriesFrame& frame, std::size_t window,
                                 std::size_t horizon) {
  if (window == 0 || horizon == 0) {
    throw UsageError("window and horizon must be positive");
  }
  if (frame.size() < window + horizon) {
    throw DataError("series '" + frame.name + "' has " + std::to_string(frame.size()) +
                    " points; window " + std::to_string(window) + " with horizon " +
                    std::to_string(horizon) + " needs at least " +
                    std::to_string(window + horizon));
  }
  const std::vector<Vec> rows = frame.feature_rows();
  std::vector<Window> out;
  const std::size_t count = frame.size() - window - horizon + 1;
  out.reserve(count);
  for (std::size_t start = 0; start < count; ++start) {
    Window w;
    w.inputs.assign(rows.begin() + static_cast<std::ptrdiff_t>(start),
                    rows.begin() + static_cast<std::ptrdiff_t>(start + window));
    w.origin = start + window - 1;
    w.target = Vec(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
      w.target[h] = frame.target[w.origin + 1 + h];
    }
    out.push_back(std::move(w));
  }
  return out;
}

Scaler Scaler::fit(std::span<const Vec> rows) {
  if (rows.empty()) {
    throw DataError("cannot fit a scaler on zero rows");
  }
  const std::size_t dim = rows.front().size();
  Scaler s;
  s.mode_ = ScalerMode::kOffline;
  s.count_ = rows.size();
  s.mean_ = Vec(dim);
  s.m2_ = Vec(dim);
  for (const Vec& r : rows) {
    if (r.size() != dim) throw ShapeError("scaler rows of unequal length");
    for (std::size_t k = 0; k < dim; ++k) s.mean_[k] += r[k];
  }
  for (auto& m : s.mean_) m /= static_cast<double>(rows.size());
  for (const Vec& r : rows) {
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = r[k] - s.mean_[k];
      s.m2_[k] += d * d;
    }
  }
  return s;
}

Scaler Scaler::running(std::size_t dim) {
  if (dim == 0) throw UsageError("scaler dimension must be positive");
  Scaler s;
  s.mode_ = ScalerMode::kRunning;
  s.mean_ = Vec(dim);
  s.m2_ = Vec(dim);
  return s;
}

Scaler Scaler::restore(ScalerMode mode, std::uint64_t count, Vec mean, Vec m2) {
  if (mean.size() != m2.size() || mean.empty()) {
    throw DataError("scaler statistics of inconsistent length");
  }
  Scaler s;
  s.mode_ = mode;
  s.count_ = count;
  s.mean_ = std::move(mean);
  s.m2_ = std::move(m2);
  return s;
}

void Scaler::update(const Vec& sample) {
  if (mode_ != ScalerMode::kRunning) {
    throw UsageError("offline scaler statistics are frozen after fit");
  }
  if (sample.size() != mean_.size()) {
    throw ShapeError("scaler sample length " + std::to_string(sample.size()) + ", expected " +
                     std::to_string(mean_.size()));
  }
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const double delta = sample[k] - mean_[k];
    mean_[k] += delta / n;
    m2_[k] += delta * (sample[k] - mean_[k]);
  }
}

Vec Scaler::stddev() const {
  Vec out(mean_.size(), 1.0);
  if (count_ < 2) return out;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double sd = std::sqrt(m2_[k] / static_cast<double>(count_));
    out[k] = sd > 0.0 ? sd : 1.0;
  }
  return out;
}

void Scaler::require_fitted(const char* op) const {
  if (!fitted()) {
    throw UsageError(std::string("scaler: ") + op + " before fit");
  }
}

Vec Scaler::transform(const Vec& row) const {
  require_fitted("transform");
  if (row.size() != dim()) {
    throw ShapeError("scaler row length " + std::to_string(row.size()) + ", expected " +
                     std::to_string(dim()));
  }
  const Vec sd = stddev();
  Vec out(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) out[k] = (row[k] - mean_[k]) / sd[k];
  return out;
}

Vec Scaler::inverse_transform(const Vec& row) const {
  require_fitted("inverse_transform");
  if (row.size() != dim()) {
    throw ShapeError("scaler row length " + std::to_string(row.size()) + ", expected " +
                     std::to_string(dim()));
  }
  const Vec sd = stddev();
  Vec out(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) out[k] = row[k] * sd[k] + mean_[k];
  return out;
}

double Scaler::transform_target(double y) const {
  require_fitted("transform");
  return (y - mean_[0]) / stddev()[0];
}

double Scaler::inverse_target(double z) const {
  require_fitted("inverse_transform");
  return z * stddev()[0] + mean_[0];
}

std::vector<Vec> transform_rows(const Scaler& scaler, std::span<const Vec> rows) {
  std::vector<Vec> out;
  out.reserve(rows.size());
  for (const Vec& r : rows) out.push_back(scaler.transform(r));
  return out;
}

SeriesFrame transform_frame(const Scaler& scaler, const SeriesFrame& frame) {
  SeriesFrame out = frame;
  for (std::size_t t = 0; t < frame.size(); ++t) {
    const Vec z = scaler.transform(frame.features(t));
    out.target[t] = z[0];
    if (!out.side_info.empty()) {
      std::copy(z.begin() + 1, z.end(), out.side_info[t].begin());
    }
  }
  return out;
}

std::string_view to_string(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::kReplicate:
      return "replicate";
    case SyntheticTask::kIdentity:
      return "identity";
    case SyntheticTask::kInverse:
      return "inverse";
  }
  return "replicate";
}

SyntheticTask parse_synthetic_task(std::string_view text) {
  if (text == "replicate") return SyntheticTask::kReplicate;
  if (text == "identity") return SyntheticTask::kIdentity;
  if (text == "inverse") return SyntheticTask::kInverse;
  throw UsageError("unknown task '" + std::string(text) +
                   "' (expected replicate, identity or inverse)");
}

std::vector<Window> gen_replicate(std::uint64_t seed, std::size_t n, const SyntheticSpec& spec) {
  Rng rng(seed);
  const FixedNetwork net{
      RecurrentStack::random(spec.cell, spec.input_dim, spec.hidden_dim, 1, rng),
      SoftGBDT::random(spec.num_trees, spec.depth, spec.hidden_dim, 1, spec.shrinkage, rng)};
  std::vector<Window> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Window w;
    w.inputs = normal_rows(rng, spec.window, spec.input_dim);
    const SequenceTrace trace = forward_sequence(net.extractor, w.inputs);
    const PooledFeature pooled = pool(trace.top_hiddens(), spec.pooling);
    w.target = Vec{gbdt_target(net.gbdt, pooled.value)};
    w.origin = i;
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Window> gen_identity(std::uint64_t seed, std::size_t n, const SyntheticSpec& spec) {
  Rng rng(seed);
  const SoftGBDT gbdt =
      SoftGBDT::random(spec.num_trees, spec.depth, spec.hidden_dim, 1, spec.shrinkage, rng);
  std::vector<Window> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Window w;
    w.inputs = normal_rows(rng, 1, spec.hidden_dim);
    w.target = Vec{gbdt_target(gbdt, w.inputs.front())};
    w.origin = i;
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Window> gen_inverse(std::uint64_t seed, std::size_t n, const Mat& mixing,
                                const SyntheticSpec& spec) {
  if (mixing.rows() != spec.hidden_dim || mixing.cols() != spec.hidden_dim) {
    throw ShapeError("gen_inverse: mixing matrix is " + shape_string(mixing) + ", expected " +
                     std::to_string(spec.hidden_dim) + "x" + std::to_string(spec.hidden_dim));
  }
  std::vector<Window> out = gen_identity(seed, n, spec);
  for (Window& w : out) {
    for (Vec& row : w.inputs) row = matvec(mixing, row);
  }
  return out;
}

Mat random_mixing(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  Mat a(dim, dim);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  for (auto& v : a.span()) v = sd * rng.normal();
  return a;
}

SeriesFrame gen_ar_stream(std::uint64_t seed, std::size_t n, double noise) {
  constexpr std::size_t kBurnIn = 100;
  Rng rng(seed);
  SeriesFrame frame;
  frame.name = "ar_stream";
  frame.target_name = "y";
  double prev = 0.0;
  double prev2 = 0.0;
  for (std::size_t t = 0; t < n + kBurnIn; ++t) {
    const double y = 0.5 * prev - 0.4 * prev2 + 0.3 * std::sin(prev) + 0.1 * prev * prev2 +
                     noise * rng.normal();
    prev2 = prev;
    prev = y;
    if (t >= kBurnIn) frame.target.push_back(y);
  }
  return frame;
}

}  // namespace recboost
