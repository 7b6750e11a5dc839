#pragma once

// Robust Scaler fit/transform/inverse, chronological train/test split, and
// fixed-length sliding-window construction.
//
// Scaling is x' = (x - median) / (q75 - q25) per feature. Quartiles use
// linear interpolation between closest ranks. A feature whose IQR is zero
// (e.g. an all-zero case series) is flagged degenerate and passes through
// centered only, so constant series stay constant under the round trip.

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "casecast/core.hpp"
#include "casecast/errors.hpp"

namespace casecast {

struct ScalerParams {
  Vector median, q25, q75, iqr;        // per feature
  std::vector<unsigned char> degenerate;  // iqr == 0

  std::size_t features() const { return median.size(); }
};

namespace detail {

// Quantile q of already-sorted values, linear interpolation between ranks.
inline double sorted_quantile(const Vector& sorted, double q) {
  const std::size_t n = sorted.size();
  const double pos = q * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

// Fit on training rows only (rows = weeks, cols = features).
inline ScalerParams fit_scaler(const Matrix& train) {
  if (train.rows < 2) {
    throw ParameterError("fit_scaler: need at least 2 training weeks, got " +
                         std::to_string(train.rows));
  }
  ScalerParams s;
  s.median.resize(train.cols);
  s.q25.resize(train.cols);
  s.q75.resize(train.cols);
  s.iqr.resize(train.cols);
  s.degenerate.resize(train.cols);
  Vector col(train.rows);
  for (std::size_t j = 0; j < train.cols; ++j) {
    for (std::size_t i = 0; i < train.rows; ++i) col[i] = train(i, j);
    std::sort(col.begin(), col.end());
    s.median[j] = detail::sorted_quantile(col, 0.50);
    s.q25[j] = detail::sorted_quantile(col, 0.25);
    s.q75[j] = detail::sorted_quantile(col, 0.75);
    s.iqr[j] = s.q75[j] - s.q25[j];
    s.degenerate[j] = s.iqr[j] == 0.0 ? 1 : 0;
  }
  return s;
}

inline Matrix transform(const ScalerParams& s, const Matrix& x) {
  if (x.cols != s.features()) {
    throw ShapeError("transform: feature count " + std::to_string(x.cols) +
                     " does not match scaler (" + std::to_string(s.features()) + ")");
  }
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double centered = x(i, j) - s.median[j];
      out(i, j) = s.degenerate[j] ? centered : centered / s.iqr[j];
    }
  }
  return out;
}

inline Matrix inverse_transform(const ScalerParams& s, const Matrix& x) {
  if (x.cols != s.features()) {
    throw ShapeError("inverse_transform: feature count " + std::to_string(x.cols) +
                     " does not match scaler (" + std::to_string(s.features()) + ")");
  }
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double v = x(i, j);
      out(i, j) = (s.degenerate[j] ? v : v * s.iqr[j]) + s.median[j];
    }
  }
  return out;
}

// Chronological split by week index; no shuffling.
inline std::pair<Matrix, Matrix> split_train_test(const Matrix& panel, std::size_t train_weeks,
                                                  std::size_t test_weeks) {
  if (train_weeks + test_weeks != panel.rows) {
    throw ParameterError("split_train_test: train (" + std::to_string(train_weeks) +
                         ") + test (" + std::to_string(test_weeks) + ") != total weeks (" +
                         std::to_string(panel.rows) + ")");
  }
  if (train_weeks == 0) throw ParameterError("split_train_test: training part cannot be empty");
  Matrix train(train_weeks, panel.cols), test(test_weeks, panel.cols);
  std::copy(panel.data.begin(), panel.data.begin() + train_weeks * panel.cols,
            train.data.begin());
  std::copy(panel.data.begin() + train_weeks * panel.cols, panel.data.end(), test.data.begin());
  return {std::move(train), std::move(test)};
}

struct WindowSet {
  std::size_t window = 0;
  std::vector<Matrix> inputs;        // per window: window x features
  Matrix targets;                    // count x features, next-week row per window
  std::vector<std::size_t> origins;  // week index of each target
};

// Stride-1 sliding windows; window w covers week rows [w, w+window-1] and
// targets row w+window.
inline WindowSet make_windows(const Matrix& series, std::size_t window) {
  if (window == 0) throw ParameterError("make_windows: window must be >= 1");
  if (series.rows <= window) {
    throw ParameterError("make_windows: series has " + std::to_string(series.rows) +
                         " weeks, need at least " + std::to_string(window + 1));
  }
  WindowSet ws;
  ws.window = window;
  const std::size_t count = series.rows - window;
  ws.targets = Matrix(count, series.cols);
  ws.inputs.reserve(count);
  ws.origins.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    Matrix in(window, series.cols);
    std::copy(series.row(w), series.row(w) + window * series.cols, in.data.begin());
    ws.inputs.push_back(std::move(in));
    std::copy(series.row(w + window), series.row(w + window) + series.cols, ws.targets.row(w));
    ws.origins.push_back(w + window);
  }
  return ws;
}

// Rearranges windows [first, first+count) into per-timestep batch blocks for
// the batched trainer: blocks[t](b, :) = inputs[first+b](t, :).
inline std::vector<Matrix> to_time_blocks(const WindowSet& ws, std::size_t first,
                                          std::size_t count) {
  if (first + count > ws.inputs.size()) {
    throw ParameterError("to_time_blocks: window range [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") exceeds " +
                         std::to_string(ws.inputs.size()) + " windows");
  }
  const std::size_t features = ws.targets.cols;
  std::vector<Matrix> blocks(ws.window, Matrix(count, features));
  for (std::size_t b = 0; b < count; ++b) {
    const Matrix& in = ws.inputs[first + b];
    for (std::size_t t = 0; t < ws.window; ++t)
      std::copy(in.row(t), in.row(t) + features, blocks[t].row(b));
  }
  return blocks;
}

inline Matrix target_rows(const WindowSet& ws, std::size_t first, std::size_t count) {
  Matrix out(count, ws.targets.cols);
  std::copy(ws.targets.row(first), ws.targets.row(first) + count * ws.targets.cols,
            out.data.begin());
  return out;
}

}  // namespace casecast
