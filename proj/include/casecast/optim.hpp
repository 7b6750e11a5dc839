#pragma once

// Adam. Per tensor entry:
//   m <- beta1*m + (1-beta1)*g
//   v <- beta2*v + (1-beta2)*g^2
//   m_hat = m / (1 - beta1^t),  v_hat = v / (1 - beta2^t)
//   theta <- theta - alpha * m_hat / sqrt(v_hat + epsilon)
// Note the epsilon sits inside the radical; with epsilon = 1e-8 this is
// numerically indistinguishable from the sqrt(v_hat)+epsilon variant at the
// magnitudes this project sees, but it is the form implemented and tested.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "casecast/core.hpp"
#include "casecast/errors.hpp"
#include "casecast/nn.hpp"

namespace casecast {

struct AdamState {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long t = 0;                // completed steps
  std::vector<Vector> m, v;  // aligned with param_spans order
};

inline AdamState make_adam_state(StackedNet& net, double alpha = 0.01, double beta1 = 0.9,
                                 double beta2 = 0.999, double epsilon = 1e-8) {
  if (!(alpha > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0)) {
    throw ParameterError("adam: require alpha > 0, beta1/beta2 in (0,1), epsilon > 0");
  }
  AdamState st;
  st.alpha = alpha;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.epsilon = epsilon;
  for (const auto& span : param_spans(net)) {
    st.m.emplace_back(span.size, 0.0);
    st.v.emplace_back(span.size, 0.0);
  }
  return st;
}

// Update rule on one flat buffer; t is the already-incremented step counter.
inline void adam_update(double* theta, const double* g, double* m, double* v, std::size_t n,
                        double alpha, double beta1, double beta2, double epsilon, long t) {
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    theta[i] -= alpha * m_hat / std::sqrt(v_hat + epsilon);
  }
}

inline void adam_step(AdamState& st, StackedNet& params, GradientSet& grads) {
  auto p_spans = param_spans(params);
  auto g_spans = grad_spans(grads);
  if (p_spans.size() != g_spans.size() || st.m.size() != p_spans.size()) {
    throw ShapeError("adam_step: tensor count mismatch between state, params and gradients");
  }
  for (std::size_t s = 0; s < p_spans.size(); ++s) {
    if (p_spans[s].size != g_spans[s].size || st.m[s].size() != p_spans[s].size) {
      throw ShapeError("adam_step: size mismatch on tensor " + p_spans[s].name);
    }
    if (!all_finite(g_spans[s].data, g_spans[s].size)) {
      throw DivergenceError(p_spans[s].name,
                            "adam_step: non-finite gradient in tensor " + p_spans[s].name);
    }
  }
  ++st.t;
  for (std::size_t s = 0; s < p_spans.size(); ++s) {
    adam_update(p_spans[s].data, g_spans[s].data, st.m[s].data(), st.v[s].data(),
                p_spans[s].size, st.alpha, st.beta1, st.beta2, st.epsilon, st.t);
  }
}

}  // namespace casecast
