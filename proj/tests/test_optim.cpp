#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "casecast/nn.hpp"
#include "casecast/optim.hpp"

using namespace casecast;

TEST_CASE("zero gradients leave parameters untouched") {
  Rng rng(1);
  StackedNet net = init_net(ModelKind::Lstm, 2, 2, 3, 1, rng);
  const StackedNet before = net;
  AdamState st = make_adam_state(net, 0.01);
  GradientSet grads = zero_gradients(net);
  adam_step(st, net, grads);
  REQUIRE(st.t == 1);
  auto sa = param_spans(net), sb = param_spans(const_cast<StackedNet&>(before));
  for (std::size_t s = 0; s < sa.size(); ++s)
    for (std::size_t i = 0; i < sa[s].size; ++i) REQUIRE(sa[s].data[i] == sb[s].data[i]);
}

TEST_CASE("scalar first step matches the hand-derived trace") {
  double theta = 0.0, g = 1.0, m = 0.0, v = 0.0;
  adam_update(&theta, &g, &m, &v, 1, 0.01, 0.9, 0.999, 1e-8, 1);
  REQUIRE(m == Catch::Approx(0.1).margin(1e-9));
  REQUIRE(v == Catch::Approx(0.001).margin(1e-9));
  // theta = -alpha / sqrt(1 + eps), frozen from 40-digit evaluation
  REQUIRE(theta == Catch::Approx(-0.00999999995).margin(1e-9));
}

TEST_CASE("bias correction makes the first m_hat equal the gradient") {
  Rng rng(2);
  for (int round = 0; round < 50; ++round) {
    const double g = rng.uniform(-100, 100);
    double theta = 0.0, m = 0.0, v = 0.0, gg = g;
    adam_update(&theta, &gg, &m, &v, 1, 0.01, 0.9, 0.999, 1e-8, 1);
    const double m_hat = m / (1.0 - 0.9);
    REQUIRE(std::abs(m_hat - g) <= 1e-15 * std::max(1.0, std::abs(g)));
  }
}

TEST_CASE("constant gradient steps converge to the learning rate") {
  const double alpha = 0.01;
  for (double c : {1.0, 1000.0, 1e-3}) {
    double theta = 0.0, m = 0.0, v = 0.0;
    double last_step = 0.0;
    for (long t = 1; t <= 10000; ++t) {
      const double prev = theta;
      double g = c;
      adam_update(&theta, &g, &m, &v, 1, alpha, 0.9, 0.999, 1e-8, t);
      last_step = std::abs(theta - prev);
      REQUIRE(v >= 0.0);
      REQUIRE(last_step <= 10.0 * alpha);
    }
    // the epsilon inside the radical shaves alpha*eps/(2c^2) off the limit,
    // noticeable only for gradients near sqrt(eps)
    REQUIRE(std::abs(last_step - alpha) <= 1e-3);
    if (c >= 1.0) REQUIRE(std::abs(last_step - alpha) <= 1e-3 * alpha);
  }
}

TEST_CASE("updates are nearly scale-free in the gradient magnitude") {
  Rng rng(3);
  double ta = 0.0, ma = 0.0, va = 0.0;
  double tb = 0.0, mb = 0.0, vb = 0.0;
  for (long t = 1; t <= 200; ++t) {
    const double g = rng.uniform(0.5, 2.0) * (t % 7 == 0 ? -1.0 : 1.0);
    const double pa = ta, pb = tb;
    double ga = g, gb = 1000.0 * g;
    adam_update(&ta, &ga, &ma, &va, 1, 0.01, 0.9, 0.999, 1e-8, t);
    adam_update(&tb, &gb, &mb, &vb, 1, 0.01, 0.9, 0.999, 1e-8, t);
    if (t > 5) {
      const double da = ta - pa, db = tb - pb;
      REQUIRE(std::abs(da - db) < 0.10 * std::max(std::abs(da), std::abs(db)));
    }
  }
}

TEST_CASE("per-coordinate steps stay bounded on random gradients") {
  Rng rng(4);
  const double alpha = 0.01;
  double theta = 0.0, m = 0.0, v = 0.0;
  for (long t = 1; t <= 2000; ++t) {
    double g = rng.uniform(-5, 5);
    if (t % 13 == 0) g = 0.0;  // intermittent silence stresses the bound
    const double prev = theta;
    adam_update(&theta, &g, &m, &v, 1, alpha, 0.9, 0.999, 1e-8, t);
    REQUIRE(std::abs(theta - prev) <= 10.0 * alpha);
    REQUIRE(v >= 0.0);
  }
}

TEST_CASE("same gradient sequence gives a bitwise-identical trajectory") {
  Rng rng(5);
  StackedNet n1 = init_net(ModelKind::Rnn, 2, 1, 3, 1, rng);
  StackedNet n2 = n1;
  AdamState s1 = make_adam_state(n1, 0.02), s2 = make_adam_state(n2, 0.02);
  for (int step = 0; step < 20; ++step) {
    GradientSet g = zero_gradients(n1);
    for (auto& span : grad_spans(g))
      for (std::size_t i = 0; i < span.size; ++i) span.data[i] = rng.uniform(-1, 1);
    GradientSet g2 = g;
    adam_step(s1, n1, g);
    adam_step(s2, n2, g2);
  }
  auto sp1 = param_spans(n1), sp2 = param_spans(n2);
  for (std::size_t s = 0; s < sp1.size(); ++s)
    for (std::size_t i = 0; i < sp1[s].size; ++i) REQUIRE(sp1[s].data[i] == sp2[s].data[i]);
}

TEST_CASE("non-finite gradients raise a divergence error naming the tensor") {
  Rng rng(6);
  StackedNet net = init_net(ModelKind::Lstm, 2, 2, 3, 1, rng);
  AdamState st = make_adam_state(net);
  GradientSet grads = zero_gradients(net);
  grads.lstm_fwd[0].w_c(1, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(st, net, grads);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    REQUIRE(e.tensor_name == "layer0.fwd.w_c");
    REQUIRE(st.t == 0);  // the step never happened
  }
}

TEST_CASE("shape mismatches are rejected") {
  Rng rng(7);
  StackedNet net = init_net(ModelKind::Lstm, 2, 2, 3, 1, rng);
  StackedNet other = init_net(ModelKind::Lstm, 2, 2, 4, 1, rng);
  AdamState st = make_adam_state(net);
  GradientSet wrong = zero_gradients(other);
  REQUIRE_THROWS_AS(adam_step(st, net, wrong), ShapeError);
  REQUIRE_THROWS_AS(make_adam_state(net, -0.01), ParameterError);
  REQUIRE_THROWS_AS(make_adam_state(net, 0.01, 1.5), ParameterError);
}
