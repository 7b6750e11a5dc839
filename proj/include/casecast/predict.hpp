#pragma once

// One-step-ahead prediction from a trained checkpoint, with optional
// multi-week extrapolation by feeding predictions back as inputs.

#include <algorithm>
#include <string>
#include <vector>

#include "casecast/checkpoint.hpp"
#include "casecast/errors.hpp"
#include "casecast/ingest.hpp"
#include "casecast/prep.hpp"
#include "casecast/weeks.hpp"

namespace casecast {

struct PredictionRow {
  std::string week;
  std::string country;
  double predicted = 0.0;
  bool extrapolated = false;  // true past the first predicted week
};

// Predicts weeks_ahead weeks past the end of the panel from its last
// `window` weeks. Weeks beyond the first are extrapolation: the model's own
// (scaled) outputs are appended to the input window.
inline std::vector<PredictionRow> predict_ahead(const Checkpoint& cp, const VariantPanel& panel,
                                                std::size_t weeks_ahead) {
  if (weeks_ahead == 0) throw ParameterError("predict: weeks_ahead must be >= 1");
  if (panel.weeks.size() < cp.window) {
    throw ConsistencyError("predict: panel has " + std::to_string(panel.weeks.size()) +
                           " weeks, checkpoint window needs " + std::to_string(cp.window));
  }

  // Column selection: the whole panel for a multivariate checkpoint, one
  // country's series for a univariate one.
  std::vector<std::size_t> cols;
  std::vector<std::string> col_names;
  if (cp.net.input_dim == 1 && !cp.country.empty()) {
    auto it = std::find(panel.countries.begin(), panel.countries.end(), cp.country);
    if (it == panel.countries.end()) {
      throw ConsistencyError("predict: checkpoint country '" + cp.country +
                             "' not present in panel");
    }
    cols.push_back(static_cast<std::size_t>(it - panel.countries.begin()));
    col_names.push_back(cp.country);
  } else {
    if (cp.net.input_dim != panel.countries.size()) {
      throw ConsistencyError("predict: checkpoint input_dim " +
                             std::to_string(cp.net.input_dim) + " does not match panel with " +
                             std::to_string(panel.countries.size()) + " countries");
    }
    for (std::size_t c = 0; c < panel.countries.size(); ++c) cols.push_back(c);
    col_names = panel.countries;
  }
  if (cp.scaler.features() != cols.size()) {
    throw ConsistencyError("predict: checkpoint scaler has " +
                           std::to_string(cp.scaler.features()) + " features, expected " +
                           std::to_string(cols.size()));
  }

  Matrix tail(cp.window, cols.size());
  const std::size_t first_row = panel.weeks.size() - cp.window;
  for (std::size_t w = 0; w < cp.window; ++w)
    for (std::size_t j = 0; j < cols.size(); ++j)
      tail(w, j) = panel.values(first_row + w, cols[j]);
  Matrix scaled = transform(cp.scaler, tail);

  std::vector<Vector> seq(cp.window);
  for (std::size_t w = 0; w < cp.window; ++w)
    seq[w] = Vector(scaled.row(w), scaled.row(w) + scaled.cols);

  std::vector<PredictionRow> rows;
  YearWeek week = parse_year_week(panel.weeks.back());
  for (std::size_t step = 0; step < weeks_ahead; ++step) {
    week = next_week(week);
    auto [pred_scaled, tape] = forward_sequence(cp.net, seq);
    Matrix pred(1, pred_scaled.size());
    std::copy(pred_scaled.begin(), pred_scaled.end(), pred.data.begin());
    const Matrix pred_orig = inverse_transform(cp.scaler, pred);
    for (std::size_t j = 0; j < col_names.size(); ++j) {
      PredictionRow row;
      row.week = format_year_week(week);
      row.country = col_names[j];
      row.predicted = pred_orig(0, j);
      row.extrapolated = step > 0;
      rows.push_back(std::move(row));
    }
    seq.erase(seq.begin());
    seq.push_back(pred_scaled);
  }
  return rows;
}

inline std::string prediction_csv(const std::vector<PredictionRow>& rows) {
  std::string out = "week,country,predicted,extrapolated\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", r.predicted);
    out += r.week + ',' + r.country + ',' + buf + ',' + (r.extrapolated ? "1" : "0") + '\n';
  }
  return out;
}

}  // namespace casecast
