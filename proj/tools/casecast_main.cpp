// casecast command-line entry point.
//
// Subcommands: ingest-check, sweep, train-one, predict, compare.
// Exit codes: 0 success, 2 config/usage error, 3 data format error,
// 4 consistency error, 5 I/O error.
//
// Option precedence: built-in defaults < --config file < explicit flags.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "casecast/checkpoint.hpp"
#include "casecast/errors.hpp"
#include "casecast/experiment.hpp"
#include "casecast/ingest.hpp"
#include "casecast/predict.hpp"
#include "casecast/report_io.hpp"

namespace {

using namespace casecast;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& flag) {
  std::vector<std::size_t> out;
  for (const auto& item : split_commas(s)) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ParameterError(flag + ": '" + item + "' is not a count");
    }
  }
  if (out.empty()) throw ParameterError(flag + ": empty list");
  return out;
}

std::vector<ModelKind> parse_kind_list(const std::string& s) {
  std::vector<ModelKind> out;
  for (const auto& item : split_commas(s)) out.push_back(kind_from_name(item));
  if (out.empty()) throw ParameterError("--kinds: empty list");
  return out;
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("config file " + path + ": " + e.what());
  }
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "mode") {
        cfg.mode = mode_from_name(value.get<std::string>());
      } else if (key == "kinds") {
        cfg.kinds.clear();
        for (const auto& k : value) cfg.kinds.push_back(kind_from_name(k.get<std::string>()));
      } else if (key == "hidden_sizes") {
        cfg.hidden_sizes = value.get<std::vector<std::size_t>>();
      } else if (key == "layer_sizes") {
        cfg.layer_sizes = value.get<std::vector<std::size_t>>();
      } else if (key == "epochs") {
        cfg.epochs = value.get<std::size_t>();
      } else if (key == "window") {
        cfg.window = value.get<std::size_t>();
      } else if (key == "learning_rate") {
        cfg.learning_rate = value.get<double>();
      } else if (key == "train_weeks") {
        cfg.train_weeks = value.get<std::size_t>();
      } else if (key == "test_weeks") {
        cfg.test_weeks = value.get<std::size_t>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "jobs") {
        cfg.jobs = value.get<std::size_t>();
      } else {
        throw ParameterError("config file " + path + ": unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("config file " + path + ": " + e.what());
  }
}

std::map<std::string, VariantPanel> load_panels(const std::string& data_path) {
  const auto records = parse_csv_file(data_path);
  const auto gisaid = filter_source(records, DataSource::Gisaid);
  if (gisaid.empty()) throw DataError("no GISAID records in " + data_path);
  return build_panels(gisaid);
}

void require_weeks_match(const ExperimentConfig& cfg,
                         const std::map<std::string, VariantPanel>& panels) {
  const std::size_t weeks = panels.begin()->second.weeks.size();
  if (cfg.train_weeks + cfg.test_weeks != weeks) {
    throw ParameterError("train_weeks (" + std::to_string(cfg.train_weeks) + ") + test_weeks (" +
                         std::to_string(cfg.test_weeks) + ") must equal the data's week count (" +
                         std::to_string(weeks) + "); set --train-weeks/--test-weeks");
  }
}

void refuse_overwrite(const std::string& out_dir, bool force) {
  if (!force && std::filesystem::exists(out_dir + "/manifest.txt")) {
    throw ParameterError("output dir " + out_dir +
                         " already holds a completed run manifest; pass --force to overwrite");
  }
}

int cmd_ingest_check(const std::string& data_path) {
  const auto records = parse_csv_file(data_path);
  const auto gisaid = filter_source(records, DataSource::Gisaid);
  const auto panels = build_panels(gisaid);

  std::set<std::string> all_variants, kept_variants;
  for (const auto& r : records) all_variants.insert(r.variant);
  for (const auto& r : gisaid) kept_variants.insert(r.variant);

  const VariantPanel& first = panels.begin()->second;
  std::printf("variants: %zu\n", panels.size());
  std::printf("countries: %zu\n", first.countries.size());
  std::printf("weeks: %zu (%s .. %s)\n", first.weeks.size(), first.weeks.front().c_str(),
              first.weeks.back().c_str());
  std::string dropped;
  for (const auto& v : all_variants) {
    if (!kept_variants.count(v)) dropped += (dropped.empty() ? "" : ", ") + v;
  }
  std::printf("dropped_by_source_filter: %s\n", dropped.empty() ? "none" : dropped.c_str());
  std::printf("variant totals:\n");
  for (const auto& [name, panel] : panels) {
    double total = 0;
    for (double v : panel.values.data) total += v;
    std::printf("  %s %.0f\n", name.c_str(), total);
  }
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& data_path,
              const std::string& out_dir, bool force) {
  refuse_overwrite(out_dir, force);
  const auto panels = load_panels(data_path);
  require_weeks_match(cfg, panels);

  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentReport report = run_experiment(cfg, panels);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  SweepRunInfo info;
  info.data_path = data_path;
  info.data_checksum = file_checksum_fnv1a64(data_path);
  info.wall_seconds = wall;
  write_report_files(report, out_dir, info);

  std::printf("selected: kind=%s hidden=%zu layers=%zu\n", kind_name(report.headline_kind),
              report.selected_hidden, report.selected_layers);
  std::printf("report: %s\n", out_dir.c_str());
  return 0;
}

struct TrainOneArgs {
  std::string data_path, out_dir, variant, country;
  ModelKind kind = ModelKind::Lstm;
  std::size_t hidden = 25, layers = 1;
  bool force = false;
};

int cmd_train_one(const ExperimentConfig& cfg, const TrainOneArgs& args) {
  refuse_overwrite(args.out_dir, args.force);
  const auto panels = load_panels(args.data_path);
  require_weeks_match(cfg, panels);
  auto it = panels.find(args.variant);
  if (it == panels.end()) throw DataError("variant '" + args.variant + "' not in data");
  const VariantPanel& panel = it->second;

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(args.out_dir + "/traces", ec);
  if (ec) throw IoError("cannot create " + args.out_dir + ": " + ec.message());

  const std::uint64_t cell_seed =
      derive_seed(cfg.seed, cell_key(cfg.mode, panel.variant, args.kind, args.hidden, args.layers));

  struct OneFit {
    std::string country;  // empty for multivariate
    SeriesFit fit;
  };
  std::vector<OneFit> fits;
  if (cfg.mode == Mode::Multivariate) {
    OneFit f;
    f.fit = train_series(panel.values, args.kind, args.hidden, args.layers, cfg.epochs,
                         cfg.learning_rate, cfg.window, cfg.train_weeks, cfg.test_weeks,
                         cell_seed);
    fits.push_back(std::move(f));
  } else {
    std::vector<std::size_t> columns;
    if (!args.country.empty()) {
      auto cit = std::find(panel.countries.begin(), panel.countries.end(), args.country);
      if (cit == panel.countries.end())
        throw DataError("country '" + args.country + "' not in data");
      columns.push_back(static_cast<std::size_t>(cit - panel.countries.begin()));
    } else {
      for (std::size_t c = 0; c < panel.countries.size(); ++c) columns.push_back(c);
    }
    for (std::size_t c : columns) {
      Matrix series(panel.values.rows, 1);
      for (std::size_t w = 0; w < panel.values.rows; ++w) series(w, 0) = panel.values(w, c);
      OneFit f;
      f.country = panel.countries[c];
      f.fit = train_series(series, args.kind, args.hidden, args.layers, cfg.epochs,
                           cfg.learning_rate, cfg.window, cfg.train_weeks, cfg.test_weeks,
                           derive_seed(cell_seed, "country=" + panel.countries[c]));
      fits.push_back(std::move(f));
    }
  }

  // Pooled original-scale loss over every test cell of every fit.
  Vector actual, predicted;
  bool diverged = false;
  for (const auto& f : fits) {
    diverged = diverged || f.fit.diverged;
    actual.insert(actual.end(), f.fit.test_actual.data.begin(), f.fit.test_actual.data.end());
    predicted.insert(predicted.end(), f.fit.test_pred.data.begin(), f.fit.test_pred.data.end());
  }
  LossPair loss;
  if (!diverged && all_finite(predicted)) loss = casecast::loss_pair(actual, predicted);

  const std::vector<std::string> test_weeks(panel.weeks.end() - static_cast<long>(cfg.test_weeks),
                                            panel.weeks.end());
  for (const auto& f : fits) {
    const std::string tag = sanitize_filename(panel.variant) +
                            (f.country.empty() ? "" : "_" + sanitize_filename(f.country));
    Checkpoint cp;
    cp.net = f.fit.net;
    cp.scaler = f.fit.scaler;
    cp.window = cfg.window;
    cp.mode = mode_name(cfg.mode);
    cp.variant = panel.variant;
    cp.country = f.country;
    write_file_atomic(args.out_dir + "/model_" + tag + ".ccnet", serialize_checkpoint(cp));

    std::string curve = "epoch,train_mse\n";
    for (std::size_t e = 0; e < f.fit.curve.size(); ++e)
      curve += std::to_string(e) + ',' + fmt_double(f.fit.curve[e]) + '\n';
    write_file_atomic(args.out_dir + "/loss_curve_" + tag + ".csv", curve);

    for (std::size_t j = 0; j < f.fit.test_pred.cols; ++j) {
      const std::string country = f.country.empty() ? panel.countries[j] : f.country;
      std::string csv = "week,actual,predicted\n";
      for (std::size_t w = 0; w < test_weeks.size(); ++w) {
        csv += test_weeks[w] + ',' + fmt_double(f.fit.test_actual(w, j)) + ',' +
               fmt_double(f.fit.test_pred(w, j)) + '\n';
      }
      write_file_atomic(args.out_dir + "/traces/" + sanitize_filename(panel.variant) + "_" +
                            sanitize_filename(country) + ".csv",
                        csv);
    }
  }

  std::string manifest;
  manifest += "format_version: 1\n";
  manifest += "command: train-one\n";
  manifest += "variant: " + panel.variant + "\n";
  manifest += std::string("mode: ") + mode_name(cfg.mode) + "\n";
  manifest += std::string("kind: ") + kind_name(args.kind) + "\n";
  manifest += "hidden: " + std::to_string(args.hidden) + "\n";
  manifest += "layers: " + std::to_string(args.layers) + "\n";
  manifest += "epochs: " + std::to_string(cfg.epochs) + "\n";
  manifest += "window: " + std::to_string(cfg.window) + "\n";
  manifest += "learning_rate: " + fmt_double(cfg.learning_rate) + "\n";
  manifest += "seed: " + std::to_string(cfg.seed) + "\n";
  manifest += "cell_seed: " + std::to_string(cell_seed) + "\n";
  manifest += std::string("diverged: ") + (diverged ? "1" : "0") + "\n";
  manifest += "test_mse: " + fmt_double(loss.mse) + "\n";
  manifest += "test_rmse: " + fmt_double(loss.rmse) + "\n";
  write_file_atomic(args.out_dir + "/manifest.txt", manifest);

  std::printf("test_mse: %s\ntest_rmse: %s\n", fmt_double(loss.mse).c_str(),
              fmt_double(loss.rmse).c_str());
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const std::string& data_path,
                std::size_t weeks_ahead, const std::string& out_path) {
  const Checkpoint cp = deserialize_checkpoint(read_file_bytes(checkpoint_path));
  const auto panels = load_panels(data_path);
  auto it = panels.find(cp.variant);
  if (it == panels.end()) {
    throw ConsistencyError("checkpoint variant '" + cp.variant + "' not present in data");
  }
  const std::string csv = prediction_csv(predict_ahead(cp, it->second, weeks_ahead));
  if (out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_file_atomic(out_path, csv);
  }
  return 0;
}

int cmd_compare(const std::string& uni_dir, const std::string& multi_dir,
                const std::string& out_dir, bool force) {
  refuse_overwrite(out_dir, force);
  auto load_min = [](const std::string& dir, const char* expect_mode) {
    std::vector<CellSummary> cells = read_cells_csv(dir + "/stage1_cells.csv");
    auto stage2 = read_cells_csv(dir + "/stage2_cells.csv");
    cells.insert(cells.end(), stage2.begin(), stage2.end());
    for (const auto& c : cells) {
      if (c.mode != expect_mode) {
        throw ConsistencyError("report in " + dir + " holds mode '" + c.mode + "', expected " +
                               expect_mode);
      }
    }
    return minima_from_cells(cells);
  };
  const auto uni = load_min(uni_dir, "univariate");
  const auto multi = load_min(multi_dir, "multivariate");
  const ComparisonTable table = compare_mode_minima(uni, multi);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  write_file_atomic(out_dir + "/comparison.csv", comparison_csv(table));

  const bool multi_majority = 2 * table.multivariate_wins > table.rows.size();
  std::string manifest;
  manifest += "format_version: 1\n";
  manifest += "command: compare\n";
  manifest += "univariate_dir: " + uni_dir + "\n";
  manifest += "multivariate_dir: " + multi_dir + "\n";
  manifest += "variants: " + std::to_string(table.rows.size()) + "\n";
  manifest += "univariate_wins: " + std::to_string(table.univariate_wins) + "\n";
  manifest += "multivariate_wins: " + std::to_string(table.multivariate_wins) + "\n";
  manifest += "ties: " + std::to_string(table.ties) + "\n";
  manifest += std::string("qualitative_multivariate_majority: ") +
              (multi_majority ? "pass" : "flag") + "\n";
  write_file_atomic(out_dir + "/manifest.txt", manifest);

  std::printf("univariate_wins: %zu\nmultivariate_wins: %zu\nties: %zu\n", table.univariate_wins,
              table.multivariate_wins, table.ties);
  return 0;
}

int run_guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data format error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "consistency error: %s\n", e.what());
    return 4;
  } catch (const ConsistencyError& e) {
    std::fprintf(stderr, "consistency error: %s\n", e.what());
    return 4;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"casecast: recurrent-network forecasting of weekly variant case counts"};
  app.require_subcommand(1);

  const std::size_t default_jobs = std::max(1u, std::thread::hardware_concurrency());

  // Shared option state. Each subcommand binds the subset it supports.
  std::string data_path, out_dir, config_path;
  std::string mode_str = "uni", kinds_str = "lstm,bilstm,rnn";
  std::string hidden_str = "25,50,75,100", layers_str = "2,3,4,5";
  std::size_t epochs = 1000, window = 10, train_weeks = 123, test_weeks = 26;
  std::size_t jobs = default_jobs;
  double lr = 0.01;
  std::uint64_t seed = 42;
  bool force = false;

  auto* ingest_cmd = app.add_subcommand("ingest-check", "Parse a dataset and print its shape");
  ingest_cmd->add_option("--data", data_path, "Input CSV (.csv or .csv.gz)")->required();

  auto add_config_options = [&](CLI::App* cmd, bool with_lists) {
    cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    cmd->add_option("--mode", mode_str, "uni or multi")->capture_default_str();
    if (with_lists) {
      cmd->add_option("--kinds", kinds_str, "Comma list of model kinds")->capture_default_str();
      cmd->add_option("--hidden-sizes", hidden_str, "Comma list of hidden sizes")
          ->capture_default_str();
      cmd->add_option("--layer-sizes", layers_str, "Comma list of layer counts")
          ->capture_default_str();
    }
    cmd->add_option("--epochs", epochs, "Training epochs per cell")->capture_default_str();
    cmd->add_option("--window", window, "Input sequence length in weeks")->capture_default_str();
    cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--train-weeks", train_weeks, "Chronological training weeks")
        ->capture_default_str();
    cmd->add_option("--test-weeks", test_weeks, "Chronological test weeks")
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Master seed")->capture_default_str();
    cmd->add_option("--jobs", jobs, "Parallel experiment cells")->capture_default_str();
  };

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the two-stage hidden/layer sweep");
  sweep_cmd->add_option("--data", data_path, "Input CSV (.csv or .csv.gz)")->required();
  sweep_cmd->add_option("--out", out_dir, "Output directory")->required();
  add_config_options(sweep_cmd, true);
  sweep_cmd->add_flag("--force", force, "Overwrite a completed run");

  TrainOneArgs one;
  std::string kind_str = "lstm";
  std::size_t one_hidden = 25, one_layers = 1;
  auto* train_cmd = app.add_subcommand("train-one", "Train a single configuration");
  train_cmd->add_option("--data", data_path, "Input CSV (.csv or .csv.gz)")->required();
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_option("--variant", one.variant, "Variant to train on")->required();
  train_cmd->add_option("--country", one.country, "Single country (univariate mode)");
  train_cmd->add_option("--kind", kind_str, "Model kind")->capture_default_str();
  train_cmd->add_option("--hidden", one_hidden, "Hidden size")->capture_default_str();
  train_cmd->add_option("--layers", one_layers, "Layer count")->capture_default_str();
  add_config_options(train_cmd, false);
  train_cmd->add_flag("--force", force, "Overwrite a completed run");

  std::string checkpoint_path, predict_out;
  std::size_t weeks_ahead = 1;
  auto* predict_cmd = app.add_subcommand("predict", "Predict ahead from a checkpoint");
  predict_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  predict_cmd->add_option("--data", data_path, "Input CSV (.csv or .csv.gz)")->required();
  predict_cmd->add_option("--weeks-ahead", weeks_ahead, "Weeks to predict (>1 extrapolates)")
      ->capture_default_str();
  predict_cmd->add_option("--out", predict_out, "Output CSV path (default: stdout)");

  std::string uni_dir, multi_dir;
  auto* compare_cmd = app.add_subcommand("compare", "Compare univariate vs multivariate runs");
  compare_cmd->add_option("--uni", uni_dir, "Univariate sweep output dir")->required();
  compare_cmd->add_option("--multi", multi_dir, "Multivariate sweep output dir")->required();
  compare_cmd->add_option("--out", out_dir, "Output directory")->required();
  compare_cmd->add_flag("--force", force, "Overwrite a completed run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
    app.exit(e);
    return 2;
  }

  auto build_config = [&](CLI::App* cmd, bool with_lists) {
    ExperimentConfig cfg;
    cfg.jobs = default_jobs;
    if (cmd->count("--config")) apply_config_file(cfg, config_path);
    if (cmd->count("--mode")) cfg.mode = mode_from_name(mode_str);
    if (with_lists) {
      if (cmd->count("--kinds")) cfg.kinds = parse_kind_list(kinds_str);
      if (cmd->count("--hidden-sizes"))
        cfg.hidden_sizes = parse_size_list(hidden_str, "--hidden-sizes");
      if (cmd->count("--layer-sizes"))
        cfg.layer_sizes = parse_size_list(layers_str, "--layer-sizes");
    }
    if (cmd->count("--epochs")) cfg.epochs = epochs;
    if (cmd->count("--window")) cfg.window = window;
    if (cmd->count("--lr")) cfg.learning_rate = lr;
    if (cmd->count("--train-weeks")) cfg.train_weeks = train_weeks;
    if (cmd->count("--test-weeks")) cfg.test_weeks = test_weeks;
    if (cmd->count("--seed")) cfg.seed = seed;
    if (cmd->count("--jobs")) cfg.jobs = jobs;
    return cfg;
  };

  if (app.got_subcommand(ingest_cmd)) {
    return run_guarded([&] { return cmd_ingest_check(data_path); });
  }
  if (app.got_subcommand(sweep_cmd)) {
    return run_guarded([&] {
      ExperimentConfig cfg = build_config(sweep_cmd, true);
      validate(cfg);
      return cmd_sweep(cfg, data_path, out_dir, force);
    });
  }
  if (app.got_subcommand(train_cmd)) {
    return run_guarded([&] {
      ExperimentConfig cfg = build_config(train_cmd, false);
      validate(cfg);
      one.data_path = data_path;
      one.out_dir = out_dir;
      one.kind = kind_from_name(kind_str);
      one.hidden = one_hidden;
      one.layers = one_layers;
      one.force = force;
      if (one.hidden == 0 || one.layers == 0)
        throw ParameterError("--hidden and --layers must be >= 1");
      return cmd_train_one(cfg, one);
    });
  }
  if (app.got_subcommand(predict_cmd)) {
    return run_guarded(
        [&] { return cmd_predict(checkpoint_path, data_path, weeks_ahead, predict_out); });
  }
  if (app.got_subcommand(compare_cmd)) {
    return run_guarded([&] { return cmd_compare(uni_dir, multi_dir, out_dir, force); });
  }
  return 2;
}
