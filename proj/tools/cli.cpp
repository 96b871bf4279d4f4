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

#include "cli.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "recboost/data.hpp"
#include "recboost/error.hpp"
#include "recboost/eval.hpp"
#include "recboost/metrics.hpp"
#include "recboost/model.hpp"
#include "recboost/numerics.hpp"

namespace recboost::cli {
namespace {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::size_t parse_count(const std::string& text, const char* flag) {
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(text, &used);
    if (used == text.size() && text.find('-') == std::string::npos) return value;
  } catch (const std::exception&) {
  }
  throw UsageError(std::string("--") + flag + ": '" + text + "' is not a non-negative integer");
}

// Turns the key=value lines of a config file into flags. They are placed
// ahead of the command-line flags, and every option keeps its last value, so
// explicit flags win. Keys may use '-' or '_'.
std::vector<std::string> config_file_flags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  std::vector<std::string> flags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    if (key.empty() || key == "config") {
      throw UsageError(path + ":" + std::to_string(line_no) + ": invalid key '" + key + "'");
    }
    flags.push_back("--" + key + "=" + value);
  }
  return flags;
}

// Splices config-file flags in directly after the subcommand name.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  if (args.empty() || args[0].starts_with("-")) return args;
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
    }
  }
  if (!path) return args;
  std::vector<std::string> expanded{args[0]};
  const auto flags = config_file_flags(*path);
  expanded.insert(expanded.end(), flags.begin(), flags.end());
  expanded.insert(expanded.end(), args.begin() + 1, args.end());
  return expanded;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

// One flag per TrainingConfig field. Only flags that were given (on the
// command line or in the config file) override the command's base config.
struct TrainingFlags {
  std::string cell, pooling;
  std::size_t hidden_dim = 0, layers = 0, window = 0, horizon = 0, depth = 0, num_trees = 0;
  std::size_t epochs = 0, online_steps = 0;
  double shrinkage = 0.0, learning_rate = 0.0, clip_norm = 0.0;
  std::uint64_t seed = 0;
  std::vector<CLI::Option*> options;

  void add(CLI::App& app) {
    options = {
        app.add_option("--cell", cell, "Recurrent cell: lstm or gru"),
        app.add_option("--pooling", pooling, "Pooling: last, mean or max"),
        app.add_option("--hidden-dim", hidden_dim, "Hidden size q"),
        app.add_option("--layers", layers, "Recurrent layers"),
        app.add_option("--window", window, "Window length T"),
        app.add_option("--horizon", horizon, "Direct forecast horizon H"),
        app.add_option("--depth", depth, "Soft tree depth"),
        app.add_option("--num-trees", num_trees, "Learnable trees M"),
        app.add_option("--shrinkage", shrinkage, "Shrinkage rate"),
        app.add_option("--learning-rate", learning_rate, "SGD learning rate"),
        app.add_option("--epochs", epochs, "Training epochs"),
        app.add_option("--seed", seed, "Model seed"),
        app.add_option("--clip-norm", clip_norm, "Global gradient-norm clip (off by default)"),
        app.add_option("--online-steps", online_steps, "SGD steps per online sample"),
    };
  }

  bool given(std::size_t i) const { return options[i]->count() > 0; }

  TrainingConfig apply(TrainingConfig config) const {
    if (given(0)) config.cell = parse_cell_kind(cell);
    if (given(1)) config.pooling = parse_pooling(pooling);
    if (given(2)) config.hidden_dim = hidden_dim;
    if (given(3)) config.layers = layers;
    if (given(4)) config.window = window;
    if (given(5)) config.horizon = horizon;
    if (given(6)) config.depth = depth;
    if (given(7)) config.num_trees = num_trees;
    if (given(8)) config.shrinkage = shrinkage;
    if (given(9)) config.learning_rate = learning_rate;
    if (given(10)) config.epochs = epochs;
    if (given(11)) config.seed = seed;
    if (given(12)) config.clip_norm = clip_norm;
    if (given(13)) config.online_steps = online_steps;
    config.validate();
    return config;
  }
};

struct DataFlags {
  std::string path;
  std::string target = "y";
  std::string side;

  void add(CLI::App& app) {
    app.add_option("--data", path, "Input CSV with a header row")->required();
    app.add_option("--target", target, "Target column")->capture_default_str();
    app.add_option("--side", side, "Comma-separated side-information columns");
  }

  SeriesFrame load() const { return load_csv(path, target, split_list(side)); }
};

std::string summary(double value) { return format_real(value); }

// --- train ---------------------------------------------------------------

struct TrainCommand {
  TrainingFlags training;
  DataFlags data;
  double train_fraction = 0.8;
  std::string out_dir = ".";
  std::string model_path;

  void add(CLI::App& app) {
    training.add(app);
    data.add(app);
    app.add_option("--train-fraction", train_fraction, "Chronological training share")
        ->capture_default_str();
    app.add_option("--out-dir", out_dir, "Directory for report.csv and the model")
        ->capture_default_str();
    app.add_option("--model", model_path, "Model file (default <out-dir>/model.txt)");
  }

  int run(std::ostream& out) const {
    const TrainingConfig config = training.apply(TrainingConfig{});
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw UsageError("--train-fraction must lie in (0, 1)");
    }
    const SeriesFrame frame = data.load();
    const auto cut = static_cast<std::size_t>(train_fraction * static_cast<double>(frame.size()));
    const SeriesFrame train = frame.slice(0, cut);
    const SeriesFrame eval = frame.slice(cut, frame.size());
    const bool has_eval = eval.size() >= config.window + config.horizon;
    const FittedModel fitted =
        fit_series(std::span<const SeriesFrame>(&train, 1), config, has_eval ? &eval : nullptr);

    const std::filesystem::path dir(out_dir);
    const std::filesystem::path model_file =
        model_path.empty() ? dir / "model.txt" : std::filesystem::path(model_path);
    {
      auto stream = open_output(model_file);
      save(fitted.model, stream);
    }
    {
      auto stream = open_output(dir / "report.csv");
      fitted.report.write_csv(stream);
    }
    out << "epochs " << fitted.report.train_loss.size() << "\n"
        << "final_train_loss " << summary(fitted.report.train_loss.back()) << "\n"
        << (has_eval ? "final_eval_rmse " : "final_train_rmse ")
        << summary(fitted.report.eval_metric.back()) << "\n"
        << "seconds " << summary(fitted.report.seconds) << "\n"
        << "model " << model_file.string() << "\n";
    return kExitOk;
  }
};

// --- predict -------------------------------------------------------------

struct PredictCommand {
  DataFlags data;
  std::string model_path;
  std::string mode = "onestep";
  std::size_t horizon = 0;
  std::string start;
  std::string out_dir = ".";
  bool drop_zero_truth = false;
  CLI::Option* horizon_option = nullptr;

  void add(CLI::App& app) {
    data.add(app);
    app.add_option("--model", model_path, "Model file written by train")->required();
    app.add_option("--mode", mode, "onestep or recursive")->capture_default_str();
    horizon_option = app.add_option("--horizon", horizon, "Forecast horizon (default: model's)");
    app.add_option("--start", start, "First predicted index (default: 80% of the series)");
    app.add_option("--out-dir", out_dir, "Directory for predictions.csv")->capture_default_str();
    app.add_flag("--drop-zero-truth", drop_zero_truth,
                 "Leave steps with a zero true value out of the CSV and metrics");
  }

  int run(std::ostream& out) const {
    PredictMode predict_mode;
    if (mode == "onestep") {
      predict_mode = PredictMode::kOneStep;
    } else if (mode == "recursive") {
      predict_mode = PredictMode::kRecursive;
    } else {
      throw UsageError("--mode must be onestep or recursive, got '" + mode + "'");
    }
    const HybridModel model = load(model_path);
    const SeriesFrame frame = data.load();
    if (frame.feature_dim() != model.input_dim()) {
      throw UsageError("model expects " + std::to_string(model.input_dim() - 1) +
                       " side columns, --side selects " + std::to_string(frame.side_dim()));
    }
    const std::size_t h = horizon_option->count() > 0 ? horizon : model.horizon();
    const std::size_t begin =
        start.empty() ? static_cast<std::size_t>(0.8 * static_cast<double>(frame.size()))
                      : parse_count(start, "start");
    OfflineResult result = run_offline_protocol(model, frame, begin, predict_mode, h);

    if (drop_zero_truth) {
      OfflineResult kept;
      for (std::size_t i = 0; i < result.step.size(); ++i) {
        const bool has_truth = i < result.truth.size();
        if (has_truth && result.truth[i] == 0.0) continue;
        kept.step.push_back(result.step[i]);
        kept.prediction = append(kept.prediction, result.prediction[i]);
        if (has_truth) kept.truth = append(kept.truth, result.truth[i]);
      }
      result = std::move(kept);
    }

    std::ostringstream csv;
    csv << "step,prediction,truth\n";
    for (std::size_t i = 0; i < result.step.size(); ++i) {
      csv << result.step[i] << ',' << format_real(result.prediction[i]) << ',';
      if (i < result.truth.size()) csv << format_real(result.truth[i]);
      csv << '\n';
    }
    const auto scored = result.scored();
    if (scored) {
      csv << "# mse," << format_real(mse(*scored)) << '\n'
          << "# rmse," << format_real(rmse(*scored)) << '\n';
      try {
        csv << "# mape," << format_real(mape(*scored)) << '\n';
      } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + "; rerun with --drop-zero-truth to skip them");
      }
      csv << "# smape," << format_real(smape(*scored)) << '\n';
    }
    const std::filesystem::path path = std::filesystem::path(out_dir) / "predictions.csv";
    auto stream = open_output(path);
    stream << csv.str();
    out << "predictions " << result.step.size() << "\n";
    if (scored) {
      out << "rmse " << summary(rmse(*scored)) << "\n"
          << "smape " << summary(smape(*scored)) << "\n";
    }
    out << "output " << path.string() << "\n";
    return kExitOk;
  }

  static Vec append(const Vec& v, double x) {
    std::vector<double> values = v.values();
    values.push_back(x);
    return Vec(std::move(values));
  }
};

// --- online --------------------------------------------------------------

struct OnlineCommand {
  TrainingFlags training;
  DataFlags data;
  std::string baseline = "model";
  std::string out_dir = ".";

  void add(CLI::App& app) {
    training.add(app);
    data.add(app);
    app.add_option("--baseline", baseline, "model or naive")->capture_default_str();
    app.add_option("--out-dir", out_dir, "Directory for online_curve.csv")->capture_default_str();
  }

  int run(std::ostream& out) const {
    const TrainingConfig config = training.apply(TrainingConfig{});
    const SeriesFrame frame = data.load();
    OnlineCurve curve;
    if (baseline == "naive") {
      curve = run_online_protocol(naive_stream(config.window), frame);
    } else if (baseline == "model") {
      if (frame.size() <= config.window) {
        throw DataError("stream has " + std::to_string(frame.size()) +
                        " rows; the model needs more than the window of " +
                        std::to_string(config.window));
      }
      Rng rng(config.seed);
      const HybridModel model = HybridModel::random(config, frame.feature_dim(), rng);
      curve = run_online_protocol(model, frame, config);
    } else {
      throw UsageError("--baseline must be model or naive, got '" + baseline + "'");
    }
    const std::filesystem::path path = std::filesystem::path(out_dir) / "online_curve.csv";
    auto stream = open_output(path);
    curve.write_csv(stream);
    out << "predictions " << curve.step.size() << "\n"
        << "final_cumulative_mse " << summary(curve.final_value()) << "\n"
        << "output " << path.string() << "\n";
    return kExitOk;
  }
};

// --- verify --------------------------------------------------------------

struct VerifyCommand {
  TrainingFlags training;
  std::string task;
  std::uint64_t data_seed = 42;
  std::size_t n = 1000;
  std::string out_dir = ".";

  void add(CLI::App& app) {
    training.add(app);
    app.add_option("--task", task, "replicate, identity or inverse")->required();
    app.add_option("--data-seed", data_seed, "Generator seed")->capture_default_str();
    app.add_option("--n", n, "Number of generated samples")->capture_default_str();
    app.add_option("--out-dir", out_dir, "Directory for verify_<task>.csv")->capture_default_str();
  }

  int run(std::ostream& out) const {
    const SyntheticTask kind = parse_synthetic_task(task);
    const TrainingConfig config = training.apply(synthetic_config(kind));
    const SyntheticRun run = run_synthetic(kind, data_seed, n, config);
    const std::filesystem::path path =
        std::filesystem::path(out_dir) / ("verify_" + std::string(to_string(kind)) + ".csv");
    auto stream = open_output(path);
    run.write_csv(stream);
    out << "task " << to_string(kind) << "\n"
        << "initial_rmse " << summary(run.initial_rmse) << "\n"
        << "final_rmse " << summary(run.final_rmse()) << "\n"
        << "target_std " << summary(run.target_std) << "\n"
        << "rmse_over_std " << summary(run.final_rmse() / run.target_std) << "\n"
        << "seconds " << summary(run.seconds) << "\n"
        << "output " << path.string() << "\n";
    return kExitOk;
  }
};

// --- ablate --------------------------------------------------------------

struct AblateCommand {
  TrainingFlags training;
  std::string task = "replicate";
  std::uint64_t data_seed = 42;
  std::size_t n = 1000;
  std::string out_dir = ".";

  void add(CLI::App& app) {
    training.add(app);
    app.add_option("--task", task, "replicate, identity or inverse")->capture_default_str();
    app.add_option("--data-seed", data_seed, "Generator seed")->capture_default_str();
    app.add_option("--n", n, "Number of generated samples")->capture_default_str();
    app.add_option("--out-dir", out_dir, "Directory for ablation.csv")->capture_default_str();
  }

  int run(std::ostream& out) const {
    const SyntheticTask kind = parse_synthetic_task(task);
    const TrainingConfig config = training.apply(synthetic_config(kind));
    const auto rows = run_ablation(kind, data_seed, n, config);
    const std::filesystem::path path = std::filesystem::path(out_dir) / "ablation.csv";
    auto stream = open_output(path);
    write_ablation_csv(stream, rows);
    write_ablation_csv(out, rows);
    return kExitOk;
  }
};

// --- gradcheck -----------------------------------------------------------

struct GradCheckCommand {
  std::string cells = "lstm,gru";
  std::string poolings = "last,mean,max";
  std::string depths = "1,2,3";
  std::string trees = "1,3";
  GradCheckMatrix matrix;
  std::string out_dir;

  void add(CLI::App& app) {
    app.add_option("--cells", cells, "Comma-separated cell kinds")->capture_default_str();
    app.add_option("--poolings", poolings, "Comma-separated poolings")->capture_default_str();
    app.add_option("--depths", depths, "Comma-separated tree depths")->capture_default_str();
    app.add_option("--trees", trees, "Comma-separated tree counts")->capture_default_str();
    app.add_option("--seeds", matrix.seeds, "Seeds per combination")->capture_default_str();
    app.add_option("--first-seed", matrix.first_seed, "First seed")->capture_default_str();
    app.add_option("--hidden-dim", matrix.hidden_dim, "Hidden size q")->capture_default_str();
    app.add_option("--input-dim", matrix.input_dim, "Input size")->capture_default_str();
    app.add_option("--window", matrix.window, "Window length T")->capture_default_str();
    app.add_option("--layers", matrix.layers, "Recurrent layers")->capture_default_str();
    app.add_option("--horizon", matrix.horizon, "Output size")->capture_default_str();
    app.add_option("--shrinkage", matrix.shrinkage, "Shrinkage rate")->capture_default_str();
    app.add_option("--eps", matrix.eps, "Central-difference step")->capture_default_str();
    app.add_option("--tol", matrix.tol, "Maximum relative error")->capture_default_str();
    app.add_option("--out-dir", out_dir, "Also write gradcheck.csv here");
  }

  int run(std::ostream& out) {
    matrix.cells.clear();
    for (const auto& c : split_list(cells)) matrix.cells.push_back(parse_cell_kind(c));
    matrix.poolings.clear();
    for (const auto& p : split_list(poolings)) matrix.poolings.push_back(parse_pooling(p));
    matrix.depths.clear();
    for (const auto& d : split_list(depths)) matrix.depths.push_back(parse_count(d, "depths"));
    matrix.tree_counts.clear();
    for (const auto& m : split_list(trees)) matrix.tree_counts.push_back(parse_count(m, "trees"));
    if (matrix.cells.empty() || matrix.poolings.empty() || matrix.depths.empty() ||
        matrix.tree_counts.empty() || matrix.seeds == 0) {
      throw UsageError("gradcheck needs at least one cell, pooling, depth, tree count and seed");
    }
    if (matrix.hidden_dim == 0 || matrix.input_dim == 0 || matrix.window == 0 ||
        matrix.layers == 0 || matrix.horizon == 0) {
      throw UsageError("gradcheck dimensions must be positive");
    }
    for (const auto d : matrix.depths) {
      if (d < 1 || d > 16) throw UsageError("--depths entries must lie in 1..16");
    }
    for (const auto m : matrix.tree_counts) {
      if (m < 1) throw UsageError("--trees entries must be positive");
    }
    if (!(matrix.shrinkage > 0.0 && matrix.shrinkage <= 1.0)) {
      throw UsageError("--shrinkage must lie in (0, 1]");
    }
    if (!(matrix.tol >= 0.0) || !std::isfinite(matrix.tol)) {
      throw UsageError("--tol must be a finite non-negative number");
    }

    const GradCheckSweep sweep = run_gradcheck_matrix(matrix);
    std::ostringstream table;
    table << "group,entries,max_rel_error\n";
    for (const auto& g : sweep.report.groups) {
      table << g.name << ',' << g.entries << ',' << format_real(g.max_rel_error) << '\n';
    }
    out << table.str() << "cases " << sweep.cases << "\n"
        << "failed_cases " << sweep.failed_cases << "\n"
        << "max_rel_error " << summary(sweep.report.max_rel_error) << "\n"
        << "tolerance " << summary(matrix.tol) << "\n"
        << (sweep.report.passed ? "PASS" : "FAIL") << "\n";
    if (!out_dir.empty()) {
      auto stream = open_output(std::filesystem::path(out_dir) / "gradcheck.csv");
      stream << table.str();
    }
    return sweep.report.passed ? kExitOk : kExitNumeric;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Hybrid recurrent + soft GBDT sequence predictor", "recboost");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  TrainCommand train;
  PredictCommand predict;
  OnlineCommand online;
  VerifyCommand verify;
  AblateCommand ablate;
  GradCheckCommand gradcheck;

  std::string config_path;
  auto add_command = [&](const char* name, const char* about, auto& command) {
    CLI::App* sub = app.add_subcommand(name, about);
    sub->add_option("--config", config_path, "Flat key=value file; flags override it");
    command.add(*sub);
    return sub;
  };
  CLI::App* train_app = add_command("train", "Train offline and save the model", train);
  CLI::App* predict_app = add_command("predict", "Forecast with a saved model", predict);
  CLI::App* online_app = add_command("online", "Predict-then-update over a stream", online);
  CLI::App* verify_app = add_command("verify", "Train on a synthetic integrity task", verify);
  CLI::App* ablate_app = add_command("ablate", "Full versus frozen-component training", ablate);
  CLI::App* gradcheck_app =
      add_command("gradcheck", "Check gradients against finite differences", gradcheck);

  try {
    std::vector<std::string> expanded = expand_config(args);
    // CLI11 consumes the vector back to front.
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsage;
    }
    if (train_app->parsed()) return train.run(out);
    if (predict_app->parsed()) return predict.run(out);
    if (online_app->parsed()) return online.run(out);
    if (verify_app->parsed()) return verify.run(out);
    if (ablate_app->parsed()) return ablate.run(out);
    if (gradcheck_app->parsed()) return gradcheck.run(out);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "recboost: usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "recboost: numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "recboost: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "recboost: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "recboost: error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace recboost::cli
