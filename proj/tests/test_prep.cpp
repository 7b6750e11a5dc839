#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "casecast/core.hpp"
#include "casecast/prep.hpp"

using namespace casecast;

namespace {

Matrix column(const Vector& values) {
  Matrix m(values.size(), 1);
  std::copy(values.begin(), values.end(), m.data.begin());
  return m;
}

// Brute-force quantile oracle: sort, then interpolate between closest ranks.
// Kept independent of the implementation under test.
double oracle_quantile(Vector values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (pos - std::floor(pos)) * (values[hi] - values[lo]);
}

}  // namespace

TEST_CASE("scaler fit on the outlier fixture") {
  const Vector fixture = {1, 2, 3, 4, 100};
  const ScalerParams s = fit_scaler(column(fixture));

  REQUIRE(oracle_quantile(fixture, 0.50) == 3.0);
  REQUIRE(oracle_quantile(fixture, 0.25) == 2.0);
  REQUIRE(oracle_quantile(fixture, 0.75) == 4.0);

  REQUIRE(s.median[0] == 3.0);
  REQUIRE(s.q25[0] == 2.0);
  REQUIRE(s.q75[0] == 4.0);
  REQUIRE(s.iqr[0] == 2.0);
  REQUIRE(!s.degenerate[0]);

  // quartiles with interpolation between ranks on an even-sized feature
  const Vector even = {1, 2, 3, 10};
  const ScalerParams se = fit_scaler(column(even));
  REQUIRE(se.median[0] == oracle_quantile(even, 0.50));
  REQUIRE(se.q25[0] == oracle_quantile(even, 0.25));
  REQUIRE(se.q75[0] == oracle_quantile(even, 0.75));
}

TEST_CASE("scaler degenerate and symmetric features") {
  const ScalerParams c = fit_scaler(column({5, 5, 5}));
  REQUIRE(c.median[0] == 5.0);
  REQUIRE(c.iqr[0] == 0.0);
  REQUIRE(c.degenerate[0]);

  const ScalerParams s = fit_scaler(column({-2.5, 0, 2.5}));
  REQUIRE(s.median[0] == 0.0);

  REQUIRE_THROWS_AS(fit_scaler(Matrix(0, 1)), ParameterError);
  REQUIRE_THROWS_AS(fit_scaler(Matrix(1, 1)), ParameterError);
}

TEST_CASE("transform and inverse") {
  const ScalerParams s = fit_scaler(column({1, 2, 3, 4, 100}));

  REQUIRE(transform(s, column({3}))(0, 0) == 0.0);        // centering
  REQUIRE(transform(s, column({100}))(0, 0) == 48.5);     // (100-3)/2
  REQUIRE(inverse_transform(s, column({0}))(0, 0) == 3.0);
  REQUIRE(inverse_transform(s, column({48.5}))(0, 0) == 100.0);

  REQUIRE_THROWS_AS(transform(s, Matrix(2, 3)), ShapeError);
}

TEST_CASE("transform round trip, degenerate features included") {
  Matrix train(6, 3);
  Rng rng(12);
  for (std::size_t i = 0; i < train.rows; ++i) {
    train(i, 0) = rng.uniform(0, 1000);
    train(i, 1) = 7.0;  // constant -> degenerate
    train(i, 2) = rng.uniform(-5, 5);
  }
  const ScalerParams s = fit_scaler(train);
  REQUIRE(s.degenerate[1]);

  Matrix x(4, 3);
  for (auto& v : x.data) v = rng.uniform(-100, 100);
  const Matrix back = inverse_transform(s, transform(s, x));
  for (std::size_t i = 0; i < x.data.size(); ++i)
    REQUIRE(back.data[i] == Catch::Approx(x.data[i]).margin(1e-12));

  // all-zero series stays all-zero under the degenerate rule
  const ScalerParams z = fit_scaler(column({0, 0, 0, 0}));
  const Matrix scaled = transform(z, column({0, 0}));
  REQUIRE(scaled(0, 0) == 0.0);
  REQUIRE(scaled(1, 0) == 0.0);
}

TEST_CASE("scaler parameters depend on training rows only") {
  Rng rng(13);
  Matrix train(10, 2), test(4, 2);
  for (auto& v : train.data) v = rng.uniform(0, 100);
  for (auto& v : test.data) v = rng.uniform(1000, 2000);  // wildly different
  const ScalerParams fit_a = fit_scaler(train);

  Matrix both(14, 2);
  std::copy(train.data.begin(), train.data.end(), both.data.begin());
  std::copy(test.data.begin(), test.data.end(), both.data.begin() + train.data.size());
  transform(fit_a, both);  // transforming more rows must not affect the fit
  const ScalerParams fit_b = fit_scaler(train);
  REQUIRE(fit_a.median == fit_b.median);
  REQUIRE(fit_a.iqr == fit_b.iqr);
}

TEST_CASE("chronological split") {
  Matrix panel(149, 2);
  for (std::size_t i = 0; i < panel.rows; ++i) {
    panel(i, 0) = static_cast<double>(i);
    panel(i, 1) = static_cast<double>(1000 + i);
  }
  auto [train, test] = split_train_test(panel, 123, 26);
  REQUIRE(train.rows == 123);
  REQUIRE(test.rows == 26);
  REQUIRE(train(0, 0) == 0.0);
  REQUIRE(train(122, 0) == 122.0);
  REQUIRE(test(0, 0) == 123.0);
  REQUIRE(test(25, 0) == 148.0);

  // concatenation reproduces the panel bit-exactly
  Matrix glued(149, 2);
  std::copy(train.data.begin(), train.data.end(), glued.data.begin());
  std::copy(test.data.begin(), test.data.end(), glued.data.begin() + train.data.size());
  REQUIRE(glued == panel);

  auto [t2, s2] = split_train_test(panel, 148, 1);
  REQUIRE(s2.rows == 1);
  REQUIRE(s2(0, 1) == 1148.0);

  REQUIRE_THROWS_AS(split_train_test(panel, 0, 149), ParameterError);
  REQUIRE_THROWS_AS(split_train_test(panel, 100, 26), ParameterError);
}

TEST_CASE("sliding windows") {
  Matrix series(12, 1);
  for (std::size_t i = 0; i < 12; ++i) series(i, 0) = static_cast<double>(i + 1);

  const WindowSet ws = make_windows(series, 10);
  REQUIRE(ws.inputs.size() == 2);
  REQUIRE(ws.targets.rows == 2);
  REQUIRE(ws.targets(0, 0) == 11.0);
  REQUIRE(ws.targets(1, 0) == 12.0);
  REQUIRE(ws.origins == std::vector<std::size_t>{10, 11});
  REQUIRE(ws.inputs[0](0, 0) == 1.0);
  REQUIRE(ws.inputs[0](9, 0) == 10.0);
  REQUIRE(ws.inputs[1](0, 0) == 2.0);

  Matrix eleven(11, 1);
  REQUIRE(make_windows(eleven, 10).inputs.size() == 1);

  Matrix constant(8, 2, 3.5);
  const WindowSet cw = make_windows(constant, 3);
  for (const auto& in : cw.inputs) REQUIRE(in == cw.inputs[0]);
  for (double t : cw.targets.data) REQUIRE(t == 3.5);

  REQUIRE_THROWS_AS(make_windows(Matrix(10, 1), 10), ParameterError);
  REQUIRE_THROWS_AS(make_windows(series, 0), ParameterError);
}

TEST_CASE("window targets plus the first window reconstruct the series") {
  Rng rng(14);
  Matrix series(30, 2);
  for (auto& v : series.data) v = rng.uniform(-10, 10);
  const std::size_t window = 7;
  const WindowSet ws = make_windows(series, window);

  Matrix rebuilt(series.rows, series.cols);
  std::copy(ws.inputs[0].data.begin(), ws.inputs[0].data.end(), rebuilt.data.begin());
  for (std::size_t w = 0; w < ws.inputs.size(); ++w)
    std::copy(ws.targets.row(w), ws.targets.row(w) + series.cols,
              rebuilt.row(ws.origins[w]));
  REQUIRE(rebuilt == series);
}

TEST_CASE("time blocks rearrange windows batch-major") {
  Rng rng(15);
  Matrix series(20, 3);
  for (auto& v : series.data) v = rng.uniform(-1, 1);
  const WindowSet ws = make_windows(series, 5);
  const auto blocks = to_time_blocks(ws, 2, 6);
  REQUIRE(blocks.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) {
    REQUIRE(blocks[t].rows == 6);
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t f = 0; f < 3; ++f) REQUIRE(blocks[t](b, f) == ws.inputs[2 + b](t, f));
  }
  const Matrix targets = target_rows(ws, 2, 6);
  for (std::size_t b = 0; b < 6; ++b)
    for (std::size_t f = 0; f < 3; ++f) REQUIRE(targets(b, f) == ws.targets(2 + b, f));

  REQUIRE_THROWS_AS(to_time_blocks(ws, 12, 6), ParameterError);
}
