#pragma once

// The experiment protocol: train/evaluate every (kind x configuration x
// variant) cell, select the hidden size by minimum-loss frequency across
// variants, then sweep layer count at that hidden size, and assemble
// comparison tables.
//
// Training is full-batch Adam over all training windows, minimizing MSE in
// scaled space; reported losses are computed on inverse-transformed
// (original-scale) values over the test windows. Univariate mode trains one
// scalar-feature model per (variant, country) and pools the residuals;
// multivariate mode trains one model per variant over all countries jointly.
//
// Every cell derives its own seed from the master seed and the canonical
// cell key "mode=..;variant=..;kind=..;hidden=..;layers=.." (univariate
// country models extend it with "country=.."), so any cell can be reproduced
// in isolation.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "casecast/core.hpp"
#include "casecast/errors.hpp"
#include "casecast/ingest.hpp"
#include "casecast/metrics.hpp"
#include "casecast/nn.hpp"
#include "casecast/optim.hpp"
#include "casecast/prep.hpp"

namespace casecast {

enum class Mode { Univariate, Multivariate };

inline const char* mode_name(Mode m) {
  return m == Mode::Univariate ? "univariate" : "multivariate";
}

inline Mode mode_from_name(const std::string& s) {
  if (s == "univariate" || s == "uni") return Mode::Univariate;
  if (s == "multivariate" || s == "multi") return Mode::Multivariate;
  throw ParameterError("unknown mode '" + s + "' (expected uni or multi)");
}

struct ExperimentConfig {
  Mode mode = Mode::Univariate;
  std::vector<ModelKind> kinds = {ModelKind::Lstm, ModelKind::BiLstm, ModelKind::Rnn};
  std::vector<std::size_t> hidden_sizes = {25, 50, 75, 100};
  std::vector<std::size_t> layer_sizes = {2, 3, 4, 5};
  std::size_t epochs = 1000;
  std::size_t window = 10;
  double learning_rate = 0.01;
  std::size_t train_weeks = 123;
  std::size_t test_weeks = 26;
  std::uint64_t seed = 42;
  std::size_t jobs = 1;
};

inline void validate(const ExperimentConfig& cfg) {
  auto ascending = [](const std::vector<std::size_t>& v) {
    for (std::size_t i = 0; i + 1 < v.size(); ++i)
      if (v[i] >= v[i + 1]) return false;
    return true;
  };
  if (cfg.kinds.empty()) throw ParameterError("config: kinds must be nonempty");
  if (cfg.hidden_sizes.empty() || !ascending(cfg.hidden_sizes) || cfg.hidden_sizes.front() == 0)
    throw ParameterError("config: hidden_sizes must be nonempty, positive, strictly increasing");
  if (cfg.layer_sizes.empty() || !ascending(cfg.layer_sizes) || cfg.layer_sizes.front() == 0)
    throw ParameterError("config: layer_sizes must be nonempty, positive, strictly increasing");
  if (cfg.window == 0) throw ParameterError("config: window must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ParameterError("config: learning_rate must be > 0");
  if (cfg.train_weeks <= cfg.window)
    throw ParameterError("config: train_weeks must exceed the window length");
  if (cfg.test_weeks == 0) throw ParameterError("config: test_weeks must be >= 1");
  if (cfg.jobs == 0) throw ParameterError("config: jobs must be >= 1");
}

struct CellResult {
  std::string variant;
  ModelKind kind = ModelKind::Lstm;
  Mode mode = Mode::Univariate;
  std::size_t hidden = 0, layers = 0;
  std::uint64_t seed = 0;
  LossPair loss;                          // original scale, pooled over test cells
  std::vector<double> train_loss_curve;   // per-epoch training MSE in scaled space
  bool diverged = false;
  std::size_t input_dim = 0, output_dim = 0, param_count = 0;
  Matrix predictions;  // test_weeks x countries, original scale
  Matrix actuals;      // test_weeks x countries, original scale
};

inline std::string cell_key(Mode mode, const std::string& variant, ModelKind kind,
                            std::size_t hidden, std::size_t layers) {
  return std::string("mode=") + mode_name(mode) + ";variant=" + variant +
         ";kind=" + kind_name(kind) + ";hidden=" + std::to_string(hidden) +
         ";layers=" + std::to_string(layers);
}

struct SeriesFit {
  StackedNet net;
  ScalerParams scaler;
  std::vector<double> curve;
  bool diverged = false;
  Matrix test_pred;    // test windows x features, original scale
  Matrix test_actual;  // test windows x features, original scale
};

// Train one model on one week x feature series and evaluate one-step-ahead
// predictions over the test windows.
inline SeriesFit train_series(const Matrix& series, ModelKind kind, std::size_t hidden,
                              std::size_t layers, std::size_t epochs, double learning_rate,
                              std::size_t window, std::size_t train_weeks,
                              std::size_t test_weeks, std::uint64_t seed) {
  if (series.rows != train_weeks + test_weeks) {
    throw ParameterError("train_series: series has " + std::to_string(series.rows) +
                         " weeks, config expects " + std::to_string(train_weeks + test_weeks));
  }
  auto [train, test] = split_train_test(series, train_weeks, test_weeks);

  SeriesFit fit;
  fit.scaler = fit_scaler(train);
  const Matrix scaled = transform(fit.scaler, series);
  const WindowSet ws = make_windows(scaled, window);
  const std::size_t n_train = train_weeks - window;
  const std::size_t n_test = test_weeks;

  Rng rng(seed);
  fit.net = init_net(kind, series.cols, series.cols, hidden, layers, rng);
  AdamState adam = make_adam_state(fit.net, learning_rate);

  const auto train_blocks = to_time_blocks(ws, 0, n_train);
  const Matrix train_targets = target_rows(ws, 0, n_train);
  const double denom = static_cast<double>(train_targets.data.size());

  fit.curve.reserve(epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    ForwardResult fr = forward_batch(fit.net, train_blocks);
    double loss = 0.0;
    Matrix pred_grad(fr.pred.rows, fr.pred.cols);
    for (std::size_t i = 0; i < fr.pred.data.size(); ++i) {
      const double r = fr.pred.data[i] - train_targets.data[i];
      loss += r * r;
      pred_grad.data[i] = 2.0 * r / denom;
    }
    loss /= denom;
    fit.curve.push_back(loss);
    if (!std::isfinite(loss)) {
      fit.diverged = true;
      break;
    }
    try {
      GradientSet grads = backward_batch(fit.net, fr.tape, pred_grad);
      adam_step(adam, fit.net, grads);
    } catch (const DivergenceError&) {
      fit.diverged = true;
      break;
    }
  }

  const auto test_blocks = to_time_blocks(ws, n_train, n_test);
  ForwardResult fr = forward_batch(fit.net, test_blocks);
  if (!all_finite(fr.pred)) fit.diverged = true;
  fit.test_pred = inverse_transform(fit.scaler, fr.pred);
  fit.test_actual = test;
  return fit;
}

// Train and evaluate one experiment cell (one variant under one
// configuration). Divergence marks the cell instead of aborting the sweep.
inline CellResult train_cell(const ExperimentConfig& cfg, const VariantPanel& panel,
                             ModelKind kind, std::size_t hidden, std::size_t layers,
                             std::uint64_t cell_seed) {
  if (panel.values.rows < cfg.window + cfg.test_weeks + 1) {
    throw ParameterError("train_cell: panel '" + panel.variant + "' has " +
                         std::to_string(panel.values.rows) + " weeks, need at least " +
                         std::to_string(cfg.window + cfg.test_weeks + 1));
  }
  const std::size_t n_countries = panel.countries.size();

  CellResult cell;
  cell.variant = panel.variant;
  cell.kind = kind;
  cell.mode = cfg.mode;
  cell.hidden = hidden;
  cell.layers = layers;
  cell.seed = cell_seed;
  cell.predictions = Matrix(cfg.test_weeks, n_countries);
  cell.actuals = Matrix(cfg.test_weeks, n_countries);

  if (cfg.mode == Mode::Multivariate) {
    auto fit = train_series(panel.values, kind, hidden, layers, cfg.epochs,
                                    cfg.learning_rate, cfg.window, cfg.train_weeks,
                                    cfg.test_weeks, cell_seed);
    cell.input_dim = n_countries;
    cell.output_dim = n_countries;
    cell.param_count = param_count(fit.net);
    cell.train_loss_curve = std::move(fit.curve);
    cell.diverged = fit.diverged;
    cell.predictions = fit.test_pred;
    cell.actuals = fit.test_actual;
  } else {
    cell.input_dim = 1;
    cell.output_dim = 1;
    std::vector<double> curve_sum;
    for (std::size_t c = 0; c < n_countries; ++c) {
      Matrix series(panel.values.rows, 1);
      for (std::size_t w = 0; w < panel.values.rows; ++w) series(w, 0) = panel.values(w, c);
      const std::uint64_t country_seed =
          derive_seed(cell_seed, "country=" + panel.countries[c]);
      auto fit = train_series(series, kind, hidden, layers, cfg.epochs,
                                      cfg.learning_rate, cfg.window, cfg.train_weeks,
                                      cfg.test_weeks, country_seed);
      if (c == 0) cell.param_count = param_count(fit.net);
      if (fit.diverged) cell.diverged = true;
      if (curve_sum.empty()) curve_sum.resize(fit.curve.size(), 0.0);
      for (std::size_t e = 0; e < fit.curve.size() && e < curve_sum.size(); ++e)
        curve_sum[e] += fit.curve[e];
      for (std::size_t w = 0; w < cfg.test_weeks; ++w) {
        cell.predictions(w, c) = fit.test_pred(w, 0);
        cell.actuals(w, c) = fit.test_actual(w, 0);
      }
    }
    for (double& v : curve_sum) v /= static_cast<double>(n_countries);
    cell.train_loss_curve = std::move(curve_sum);
  }

  if (cell.diverged || !all_finite(cell.predictions)) {
    cell.diverged = true;
    cell.loss.mse = std::numeric_limits<double>::quiet_NaN();
    cell.loss.rmse = std::numeric_limits<double>::quiet_NaN();
  } else {
    cell.loss = loss_pair(cell.actuals, cell.predictions);
  }
  return cell;
}

// ---------------------------------------------------------------------------
// Stage tables and minimum-loss-frequency selection.

struct StageResult {
  std::string axis;  // "hidden" or "layers"
  std::vector<std::size_t> candidates;
  std::vector<CellResult> cells;  // variant-major, then kind, then candidate
  std::map<std::size_t, std::map<std::size_t, std::size_t>> tally;  // kind index -> size -> count
  std::map<std::size_t, std::size_t> combined_tally;                // size -> count
  std::size_t selected = 0;
  std::vector<std::string> diverged_cells;
};

namespace detail {

inline std::size_t axis_value(const CellResult& c, bool by_hidden) {
  return by_hidden ? c.hidden : c.layers;
}

}  // namespace detail

// Tally, per kind, how many variants attain their minimum loss at each
// candidate size; the winner is the size with the largest tally summed over
// kinds, ties broken toward the smaller size. Diverged cells never count.
inline void select_by_min_loss_frequency(StageResult& stage,
                                         const std::vector<ModelKind>& kinds,
                                         bool by_hidden) {
  stage.tally.clear();
  stage.combined_tally.clear();
  for (std::size_t s : stage.candidates) stage.combined_tally[s] = 0;
  for (std::size_t k = 0; k < kinds.size(); ++k)
    for (std::size_t s : stage.candidates) stage.tally[k][s] = 0;

  std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> best;
  for (const auto& cell : stage.cells) {
    if (cell.diverged) continue;
    std::size_t kind_index = 0;
    for (std::size_t k = 0; k < kinds.size(); ++k)
      if (kinds[k] == cell.kind) kind_index = k;
    const auto key = std::make_pair(cell.variant, kind_index);
    const std::size_t size = detail::axis_value(cell, by_hidden);
    auto it = best.find(key);
    // strict < keeps the smaller size on ties (cells are size-ascending)
    if (it == best.end() || cell.loss.mse < it->second.first) {
      best[key] = {cell.loss.mse, size};
    }
  }
  for (const auto& [key, val] : best) {
    stage.tally[key.second][val.second] += 1;
    stage.combined_tally[val.second] += 1;
  }
  std::size_t selected = stage.candidates.front();
  std::size_t best_count = 0;
  for (std::size_t s : stage.candidates) {  // ascending: first max wins ties
    const std::size_t count = stage.combined_tally[s];
    if (count > best_count) {
      best_count = count;
      selected = s;
    }
  }
  stage.selected = selected;
}

// The kind attaining the per-variant minimum for the most variants (the
// "bold cell" count of the stage tables); ties go to the earlier kind in
// config order.
inline ModelKind select_headline_kind(const std::vector<CellResult>& cells,
                                      const std::vector<ModelKind>& kinds) {
  std::map<std::string, std::pair<double, std::size_t>> best;  // variant -> (mse, kind idx)
  for (const auto& cell : cells) {
    if (cell.diverged) continue;
    std::size_t kind_index = 0;
    for (std::size_t k = 0; k < kinds.size(); ++k)
      if (kinds[k] == cell.kind) kind_index = k;
    auto it = best.find(cell.variant);
    if (it == best.end() || cell.loss.mse < it->second.first ||
        (cell.loss.mse == it->second.first && kind_index < it->second.second)) {
      best[cell.variant] = {cell.loss.mse, kind_index};
    }
  }
  std::vector<std::size_t> wins(kinds.size(), 0);
  for (const auto& [variant, val] : best) wins[val.second] += 1;
  std::size_t top = 0;
  for (std::size_t k = 1; k < kinds.size(); ++k)
    if (wins[k] > wins[top]) top = k;
  return kinds[top];
}

namespace detail {

inline void parallel_for(std::size_t n, std::size_t jobs,
                         const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t count = std::min(jobs, n);
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline StageResult run_stage(const ExperimentConfig& cfg,
                             const std::map<std::string, VariantPanel>& panels, bool by_hidden,
                             std::size_t fixed_hidden) {
  StageResult stage;
  stage.axis = by_hidden ? "hidden" : "layers";
  stage.candidates = by_hidden ? cfg.hidden_sizes : cfg.layer_sizes;

  struct Job {
    const VariantPanel* panel;
    ModelKind kind;
    std::size_t hidden, layers;
  };
  std::vector<Job> jobs;
  for (const auto& [name, panel] : panels) {  // std::map iterates sorted
    for (ModelKind kind : cfg.kinds) {
      for (std::size_t size : stage.candidates) {
        Job j;
        j.panel = &panel;
        j.kind = kind;
        j.hidden = by_hidden ? size : fixed_hidden;
        j.layers = by_hidden ? 1 : size;  // hidden sweep runs single-layer nets
        jobs.push_back(j);
      }
    }
  }
  stage.cells.resize(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
    const Job& j = jobs[i];
    const std::uint64_t seed = derive_seed(
        cfg.seed, cell_key(cfg.mode, j.panel->variant, j.kind, j.hidden, j.layers));
    stage.cells[i] = train_cell(cfg, *j.panel, j.kind, j.hidden, j.layers, seed);
  });
  for (const auto& cell : stage.cells) {
    if (cell.diverged) {
      stage.diverged_cells.push_back(
          cell_key(cfg.mode, cell.variant, cell.kind, cell.hidden, cell.layers));
    }
  }
  select_by_min_loss_frequency(stage, cfg.kinds, by_hidden);
  return stage;
}

}  // namespace detail

inline StageResult run_hidden_sweep(const ExperimentConfig& cfg,
                                    const std::map<std::string, VariantPanel>& panels) {
  validate(cfg);
  if (panels.empty()) throw DataError("run_hidden_sweep: no panels");
  return detail::run_stage(cfg, panels, true, 0);
}

inline StageResult run_layer_sweep(const ExperimentConfig& cfg,
                                   const std::map<std::string, VariantPanel>& panels,
                                   std::size_t hidden) {
  validate(cfg);
  if (panels.empty()) throw DataError("run_layer_sweep: no panels");
  if (hidden == 0) throw ParameterError("run_layer_sweep: hidden must be >= 1");
  return detail::run_stage(cfg, panels, false, hidden);
}

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::string> variants;
  std::vector<std::string> countries;
  std::vector<std::string> test_week_labels;
  StageResult hidden_stage;
  StageResult layer_stage;
  std::size_t selected_hidden = 0;
  std::size_t selected_layers = 0;
  ModelKind headline_kind = ModelKind::Lstm;
};

// Both protocol stages: hidden sweep at a single layer, then layer sweep at
// the winning hidden size.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                       const std::map<std::string, VariantPanel>& panels) {
  validate(cfg);
  if (panels.empty()) throw DataError("run_experiment: no panels");

  ExperimentReport report;
  report.config = cfg;
  for (const auto& [name, panel] : panels) report.variants.push_back(name);
  const VariantPanel& first = panels.begin()->second;
  if (first.weeks.size() != cfg.train_weeks + cfg.test_weeks) {
    throw ParameterError("run_experiment: panels hold " + std::to_string(first.weeks.size()) +
                         " weeks, config expects " +
                         std::to_string(cfg.train_weeks + cfg.test_weeks));
  }
  report.countries = first.countries;
  report.test_week_labels.assign(first.weeks.end() - static_cast<long>(cfg.test_weeks),
                                 first.weeks.end());

  report.hidden_stage = run_hidden_sweep(cfg, panels);
  report.selected_hidden = report.hidden_stage.selected;
  report.layer_stage = run_layer_sweep(cfg, panels, report.selected_hidden);
  report.selected_layers = report.layer_stage.selected;
  report.headline_kind = select_headline_kind(report.layer_stage.cells, cfg.kinds);
  return report;
}

// ---------------------------------------------------------------------------
// Univariate vs multivariate comparison.

struct ComparisonRow {
  std::string variant;
  double mse_univariate = 0.0;
  double mse_multivariate = 0.0;
  int winner = 0;  // -1 univariate, +1 multivariate, 0 tie
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::size_t univariate_wins = 0, multivariate_wins = 0, ties = 0;
};

inline ComparisonTable compare_mode_minima(const std::map<std::string, double>& uni_min,
                                           const std::map<std::string, double>& multi_min) {
  if (uni_min.size() != multi_min.size()) {
    throw ConsistencyError("compare: variant sets differ in size (" +
                           std::to_string(uni_min.size()) + " vs " +
                           std::to_string(multi_min.size()) + ")");
  }
  ComparisonTable table;
  for (const auto& [variant, u] : uni_min) {
    auto it = multi_min.find(variant);
    if (it == multi_min.end())
      throw ConsistencyError("compare: variant '" + variant + "' missing from one report");
    ComparisonRow row;
    row.variant = variant;
    row.mse_univariate = u;
    row.mse_multivariate = it->second;
    if (u < it->second) {
      row.winner = -1;
      ++table.univariate_wins;
    } else if (it->second < u) {
      row.winner = +1;
      ++table.multivariate_wins;
    } else {
      ++table.ties;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// Per-variant minimum MSE over every non-diverged cell of a report.
inline std::map<std::string, double> report_minima(const ExperimentReport& report) {
  std::map<std::string, double> out;
  auto scan = [&](const std::vector<CellResult>& cells) {
    for (const auto& c : cells) {
      if (c.diverged) continue;
      auto it = out.find(c.variant);
      if (it == out.end() || c.loss.mse < it->second) out[c.variant] = c.loss.mse;
    }
  };
  scan(report.hidden_stage.cells);
  scan(report.layer_stage.cells);
  return out;
}

inline ComparisonTable compare_modes(const ExperimentReport& uni, const ExperimentReport& multi) {
  if (uni.config.mode != Mode::Univariate || multi.config.mode != Mode::Multivariate) {
    throw ConsistencyError("compare_modes: reports passed in the wrong order");
  }
  return compare_mode_minima(report_minima(uni), report_minima(multi));
}

}  // namespace casecast
