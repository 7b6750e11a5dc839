#pragma once

// MSE / RMSE. One number per (variant, configuration): residuals from every
// test cell are pooled before averaging.

#include <cmath>
#include <string>

#include "casecast/core.hpp"
#include "casecast/errors.hpp"

namespace casecast {

struct LossPair {
  double mse = 0.0;
  double rmse = 0.0;
};

inline double mse(const Vector& y, const Vector& y_hat) {
  if (y.size() != y_hat.size()) {
    throw ParameterError("mse: length mismatch (" + std::to_string(y.size()) + " vs " +
                         std::to_string(y_hat.size()) + ")");
  }
  if (y.empty()) throw ParameterError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - y_hat[i];
    acc += r * r;
  }
  return acc / static_cast<double>(y.size());
}

inline double rmse(const Vector& y, const Vector& y_hat) { return std::sqrt(mse(y, y_hat)); }

inline LossPair loss_pair(const Vector& y, const Vector& y_hat) {
  LossPair lp;
  lp.mse = mse(y, y_hat);
  lp.rmse = std::sqrt(lp.mse);
  return lp;
}

// Pooled over all cells of both matrices.
inline LossPair loss_pair(const Matrix& y, const Matrix& y_hat) {
  if (!y.same_shape(y_hat)) {
    throw ParameterError("loss_pair: shape mismatch (" + shape_str(y) + " vs " +
                         shape_str(y_hat) + ")");
  }
  return loss_pair(y.data, y_hat.data);
}

}  // namespace casecast
