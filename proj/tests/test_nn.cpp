#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "casecast/core.hpp"
#include "casecast/metrics.hpp"
#include "casecast/nn.hpp"

using namespace casecast;

namespace {

std::vector<Vector> random_sequence(Rng& rng, std::size_t steps, std::size_t dim) {
  std::vector<Vector> xs(steps);
  for (auto& x : xs) x = rng_uniform(rng, -1, 1, dim);
  return xs;
}

double seq_loss(const StackedNet& net, const std::vector<Vector>& xs, const Vector& target) {
  auto [pred, tape] = forward_sequence(net, xs);
  return mse(target, pred);
}

// Central finite differences over every parameter; the independent oracle
// for backward_sequence.
void check_gradients(StackedNet& net, const std::vector<Vector>& xs, const Vector& target,
                     double step = 1e-5, double rel_tol = 1e-4, double abs_floor = 1e-7) {
  auto [pred, tape] = forward_sequence(net, xs);
  Vector loss_grad(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    loss_grad[i] = 2.0 * (pred[i] - target[i]) / static_cast<double>(pred.size());
  GradientSet grads = backward_sequence(net, tape, loss_grad);

  auto p_spans = param_spans(net);
  auto g_spans = grad_spans(grads);
  REQUIRE(p_spans.size() == g_spans.size());
  for (std::size_t s = 0; s < p_spans.size(); ++s) {
    for (std::size_t i = 0; i < p_spans[s].size; ++i) {
      double& theta = p_spans[s].data[i];
      const double saved = theta;
      theta = saved + step;
      const double up = seq_loss(net, xs, target);
      theta = saved - step;
      const double down = seq_loss(net, xs, target);
      theta = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = g_spans[s].data[i];
      const double tol = std::max(abs_floor, rel_tol * std::max(std::abs(fd), std::abs(an)));
      INFO(p_spans[s].name << "[" << i << "] analytic=" << an << " fd=" << fd);
      REQUIRE(std::abs(fd - an) <= tol);
    }
  }
}

}  // namespace

TEST_CASE("lstm cell step") {
  SECTION("all-zero parameters pin the gates at 1/2") {
    auto p = LstmCellParams::zeros(2, 3);
    LstmState s{Vector(2, 0.0), Vector(2, 0.0)};
    const LstmState next = lstm_cell_step(p, s, {0.3, -0.8, 0.5});
    REQUIRE(next.c == Vector{0.0, 0.0});
    REQUIRE(next.h == Vector{0.0, 0.0});
  }
  SECTION("cell state halves through the zero-parameter forget gate") {
    auto p = LstmCellParams::zeros(1, 1);
    LstmState s{Vector{0.0}, Vector{2.0}};
    const LstmState next = lstm_cell_step(p, s, {0.0});
    REQUIRE(next.c[0] == Catch::Approx(1.0).margin(1e-15));
    // 0.5 * tanh(1), frozen from 40-digit evaluation
    REQUIRE(next.h[0] == Catch::Approx(0.3807970779778824).margin(1e-15));
  }
  SECTION("saturated forget bias keeps the cell state") {
    auto p = LstmCellParams::zeros(1, 1);
    p.b_f[0] = 1e3;
    LstmState s{Vector{0.0}, Vector{1.0}};
    const LstmState next = lstm_cell_step(p, s, {0.0});
    REQUIRE(next.c[0] == Catch::Approx(1.0).margin(1e-9));
  }
  SECTION("state must match the cell") {
    auto p = LstmCellParams::zeros(2, 1);
    LstmState bad{Vector(3, 0.0), Vector(3, 0.0)};
    REQUIRE_THROWS_AS(lstm_cell_step(p, bad, {0.0}), ShapeError);
    LstmState ok{Vector(2, 0.0), Vector(2, 0.0)};
    REQUIRE_THROWS_AS(lstm_cell_step(p, ok, {0.0, 1.0}), ShapeError);
  }
}

TEST_CASE("rnn cell step") {
  auto p = RnnCellParams::zeros(1, 1);
  REQUIRE(rnn_cell_step(p, {0.0}, {0.7}) == Vector{0.0});

  p.w(0, 1) = 1.0;  // input column only
  // tanh(0.5), frozen from 40-digit evaluation
  REQUIRE(rnn_cell_step(p, {0.0}, {0.5})[0] ==
          Catch::Approx(0.46211715726000974).margin(1e-15));

  auto zero = RnnCellParams::zeros(2, 1);
  Vector h(2, 0.0);
  for (int t = 0; t < 5; ++t) h = rnn_cell_step(zero, h, {0.0});
  REQUIRE(h == Vector{0.0, 0.0});

  REQUIRE_THROWS_AS(rnn_cell_step(zero, {0.0}, {0.0}), ShapeError);
}

TEST_CASE("init_net") {
  SECTION("deterministic given the seed") {
    Rng a(99), b(99);
    StackedNet n1 = init_net(ModelKind::BiLstm, 3, 3, 4, 2, a);
    StackedNet n2 = init_net(ModelKind::BiLstm, 3, 3, 4, 2, b);
    auto s1 = param_spans(n1), s2 = param_spans(n2);
    REQUIRE(s1.size() == s2.size());
    for (std::size_t s = 0; s < s1.size(); ++s)
      for (std::size_t i = 0; i < s1[s].size; ++i) REQUIRE(s1[s].data[i] == s2[s].data[i]);
  }
  SECTION("weights bounded by 1/sqrt(hidden), biases zero") {
    Rng rng(5);
    StackedNet net = init_net(ModelKind::Lstm, 2, 2, 25, 1, rng);
    for (const auto& span : param_spans(net)) {
      for (std::size_t i = 0; i < span.size; ++i) {
        if (span.cols == 0) {
          REQUIRE(span.data[i] == 0.0);
        } else {
          REQUIRE(std::abs(span.data[i]) < 0.2);
        }
      }
    }
  }
  SECTION("upper bilstm layers consume concatenated features") {
    Rng rng(5);
    StackedNet net = init_net(ModelKind::BiLstm, 30, 30, 25, 2, rng);
    REQUIRE(net.lstm_fwd[1].w_i.rows == 25);
    REQUIRE(net.lstm_fwd[1].w_i.cols == 75);  // hidden + 2*hidden
    REQUIRE(net.lstm_bwd[1].w_i.cols == 75);
    REQUIRE(net.head_w.cols == 50);
  }
  SECTION("rejects zero dims") {
    Rng rng(5);
    REQUIRE_THROWS_AS(init_net(ModelKind::Lstm, 0, 1, 2, 1, rng), ParameterError);
    REQUIRE_THROWS_AS(init_net(ModelKind::Lstm, 1, 1, 0, 1, rng), ParameterError);
    REQUIRE_THROWS_AS(init_net(ModelKind::Lstm, 1, 1, 2, 0, rng), ParameterError);
  }
}

TEST_CASE("forward_sequence") {
  SECTION("zero parameters predict head_b") {
    Rng rng(1);
    StackedNet net = init_net(ModelKind::Lstm, 2, 2, 3, 2, rng);
    for (auto& span : param_spans(net))
      for (std::size_t i = 0; i < span.size; ++i) span.data[i] = 0.0;
    net.head_b = {1.5, -2.5};
    auto [pred, tape] = forward_sequence(net, random_sequence(rng, 4, 2));
    REQUIRE(pred == Vector{1.5, -2.5});
  }
  SECTION("length-1 sequence reduces to one cell step plus the head") {
    Rng rng(2);
    StackedNet net = init_net(ModelKind::Lstm, 2, 1, 3, 1, rng);
    const Vector x = rng_uniform(rng, -1, 1, 2);
    auto [pred, tape] = forward_sequence(net, {x});

    LstmState s{Vector(3, 0.0), Vector(3, 0.0)};
    const LstmState stepped = lstm_cell_step(net.lstm_fwd[0], s, x);
    Vector manual = matvec(net.head_w, stepped.h);
    manual[0] += net.head_b[0];
    REQUIRE(pred[0] == Catch::Approx(manual[0]).margin(1e-14));
  }
  SECTION("bilstm directions agree on a palindrome") {
    Rng rng(3);
    StackedNet net = init_net(ModelKind::BiLstm, 2, 1, 3, 1, rng);
    net.lstm_bwd[0] = net.lstm_fwd[0];
    std::vector<Vector> xs = random_sequence(rng, 5, 2);
    xs[3] = xs[1];
    xs[4] = xs[0];  // palindrome
    auto [pred, tape] = forward_sequence(net, xs);
    const DirTape& f = tape.layer[0].fwd;
    const DirTape& b = tape.layer[0].bwd;
    // the backward chain consumes the same stream, so its state at time 0
    // matches the forward chain's state at the end
    for (std::size_t j = 0; j < 3; ++j)
      REQUIRE(f.h[4](0, j) == Catch::Approx(b.h[0](0, j)).margin(1e-14));
  }
  SECTION("errors") {
    Rng rng(4);
    StackedNet net = init_net(ModelKind::Rnn, 2, 1, 3, 1, rng);
    REQUIRE_THROWS_AS(forward_sequence(net, {}), ParameterError);
    REQUIRE_THROWS_AS(forward_sequence(net, {Vector{1.0}}), ShapeError);
  }
}

TEST_CASE("forward does not mutate parameters and is deterministic") {
  Rng rng(6);
  StackedNet net = init_net(ModelKind::BiLstm, 3, 2, 4, 2, rng);
  const StackedNet before = net;
  const auto xs = random_sequence(rng, 5, 3);
  auto [p1, t1] = forward_sequence(net, xs);
  auto [p2, t2] = forward_sequence(net, xs);
  REQUIRE(p1 == p2);
  auto sb = param_spans(const_cast<StackedNet&>(before));
  auto sa = param_spans(net);
  for (std::size_t s = 0; s < sa.size(); ++s)
    for (std::size_t i = 0; i < sa[s].size; ++i) REQUIRE(sa[s].data[i] == sb[s].data[i]);
}

TEST_CASE("gate activations stay inside their ranges") {
  Rng rng(7);
  StackedNet net = init_net(ModelKind::BiLstm, 2, 2, 5, 2, rng);
  auto xs = random_sequence(rng, 6, 2);
  for (auto& x : xs)
    for (auto& v : x) v *= 3.0;
  auto [pred, tape] = forward_sequence(net, xs);
  for (const auto& layer : tape.layer) {
    for (const DirTape* dir : {&layer.fwd, &layer.bwd}) {
      for (std::size_t t = 0; t < dir->h.size(); ++t) {
        for (std::size_t i = 0; i < dir->gi[t].data.size(); ++i) {
          REQUIRE(dir->gi[t].data[i] > 0.0);
          REQUIRE(dir->gi[t].data[i] < 1.0);
          REQUIRE(dir->gf[t].data[i] > 0.0);
          REQUIRE(dir->gf[t].data[i] < 1.0);
          REQUIRE(dir->go[t].data[i] > 0.0);
          REQUIRE(dir->go[t].data[i] < 1.0);
          REQUIRE(dir->gg[t].data[i] > -1.0);
          REQUIRE(dir->gg[t].data[i] < 1.0);
          REQUIRE(dir->tc[t].data[i] > -1.0);
          REQUIRE(dir->tc[t].data[i] < 1.0);
        }
      }
    }
  }

  // under extreme inputs the activations saturate but never escape the
  // closed interval
  for (auto& x : xs)
    for (auto& v : x) v *= 100.0;
  auto [pred2, tape2] = forward_sequence(net, xs);
  for (const auto& layer : tape2.layer) {
    for (const DirTape* dir : {&layer.fwd, &layer.bwd}) {
      for (std::size_t t = 0; t < dir->h.size(); ++t) {
        for (std::size_t i = 0; i < dir->gi[t].data.size(); ++i) {
          REQUIRE(dir->gi[t].data[i] >= 0.0);
          REQUIRE(dir->gi[t].data[i] <= 1.0);
          REQUIRE(dir->gg[t].data[i] >= -1.0);
          REQUIRE(dir->gg[t].data[i] <= 1.0);
          REQUIRE(dir->tc[t].data[i] >= -1.0);
          REQUIRE(dir->tc[t].data[i] <= 1.0);
        }
      }
    }
  }
}

TEST_CASE("bilstm with zeroed backward head columns reduces to the lstm") {
  Rng rng(8);
  StackedNet lstm = init_net(ModelKind::Lstm, 2, 2, 3, 1, rng);
  StackedNet bi;
  bi.kind = ModelKind::BiLstm;
  bi.input_dim = 2;
  bi.output_dim = 2;
  bi.hidden = 3;
  bi.layer_count = 1;
  bi.lstm_fwd = lstm.lstm_fwd;
  Rng other(99);
  bi.lstm_bwd.push_back(init_net(ModelKind::Lstm, 2, 2, 3, 1, other).lstm_fwd[0]);
  bi.head_w = Matrix(2, 6);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) bi.head_w(r, c) = lstm.head_w(r, c);
  bi.head_b = lstm.head_b;

  Rng data(10);
  const auto xs = random_sequence(data, 5, 2);
  auto [p_lstm, t1] = forward_sequence(lstm, xs);
  auto [p_bi, t2] = forward_sequence(bi, xs);
  REQUIRE(p_lstm == p_bi);  // exact: zero columns contribute exact zeros
}

TEST_CASE("backward zero loss gradient annihilates") {
  Rng rng(9);
  StackedNet net = init_net(ModelKind::BiLstm, 2, 2, 3, 2, rng);
  auto [pred, tape] = forward_sequence(net, random_sequence(rng, 4, 2));
  GradientSet grads = backward_sequence(net, tape, Vector(2, 0.0));
  for (const auto& span : grad_spans(grads))
    for (std::size_t i = 0; i < span.size; ++i) REQUIRE(span.data[i] == 0.0);
}

TEST_CASE("head gradient is the outer product of loss grad and features") {
  Rng rng(10);
  StackedNet net = init_net(ModelKind::Lstm, 2, 2, 3, 1, rng);
  auto [pred, tape] = forward_sequence(net, {rng_uniform(rng, -1, 1, 2)});
  const Vector loss_grad = rng_uniform(rng, -1, 1, 2);
  GradientSet grads = backward_sequence(net, tape, loss_grad);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      REQUIRE(grads.head_w(r, c) ==
              Catch::Approx(loss_grad[r] * tape.top_feat(0, c)).margin(1e-15));
    }
    REQUIRE(grads.head_b[r] == loss_grad[r]);
  }
}

TEST_CASE("gradients match central finite differences") {
  // hidden in {2,3}, layers in {1,2}, all kinds, sequence length <= 4
  Rng data_rng(20);
  for (ModelKind kind : {ModelKind::Rnn, ModelKind::Lstm, ModelKind::BiLstm}) {
    for (std::size_t hidden : {2u, 3u}) {
      for (std::size_t layers : {1u, 2u}) {
        for (std::size_t steps : {1u, 4u}) {
          Rng rng(1000 + static_cast<int>(kind) * 100 + hidden * 10 + layers);
          StackedNet net = init_net(kind, 2, 2, hidden, layers, rng);
          const auto xs = random_sequence(data_rng, steps, 2);
          const Vector target = rng_uniform(data_rng, -1, 1, 2);
          INFO("kind=" << kind_name(kind) << " hidden=" << hidden << " layers=" << layers
                       << " steps=" << steps);
          check_gradients(net, xs, target);
        }
      }
    }
  }
}

TEST_CASE("batched gradients equal the sum of per-window gradients") {
  Rng rng(30);
  StackedNet net = init_net(ModelKind::Lstm, 2, 2, 3, 2, rng);
  const std::size_t batch = 5, steps = 4;

  std::vector<Matrix> blocks(steps, Matrix(batch, 2));
  std::vector<std::vector<Vector>> seqs(batch, std::vector<Vector>(steps));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) {
      seqs[b][t] = rng_uniform(rng, -1, 1, 2);
      std::copy(seqs[b][t].begin(), seqs[b][t].end(), blocks[t].row(b));
    }

  Matrix pred_grad(batch, 2);
  for (auto& v : pred_grad.data) v = rng.uniform(-1, 1);

  ForwardResult fr = forward_batch(net, blocks);
  GradientSet batched = backward_batch(net, fr.tape, pred_grad);

  GradientSet summed = zero_gradients(net);
  auto sum_spans = grad_spans(summed);
  for (std::size_t b = 0; b < batch; ++b) {
    auto [pred, tape] = forward_sequence(net, seqs[b]);
    for (std::size_t j = 0; j < 2; ++j)
      REQUIRE(fr.pred(b, j) == Catch::Approx(pred[j]).margin(1e-14));
    GradientSet one = backward_sequence(net, tape, Vector(pred_grad.row(b), pred_grad.row(b) + 2));
    auto one_spans = grad_spans(one);
    for (std::size_t s = 0; s < sum_spans.size(); ++s)
      for (std::size_t i = 0; i < sum_spans[s].size; ++i)
        sum_spans[s].data[i] += one_spans[s].data[i];
  }
  auto batch_spans = grad_spans(batched);
  for (std::size_t s = 0; s < batch_spans.size(); ++s)
    for (std::size_t i = 0; i < batch_spans[s].size; ++i)
      REQUIRE(batch_spans[s].data[i] ==
              Catch::Approx(sum_spans[s].data[i]).margin(1e-9));
}

TEST_CASE("backward rejects a mismatched tape") {
  Rng rng(40);
  StackedNet a = init_net(ModelKind::Lstm, 2, 2, 3, 1, rng);
  StackedNet b = init_net(ModelKind::Lstm, 2, 2, 4, 1, rng);
  auto [pred, tape] = forward_sequence(a, random_sequence(rng, 3, 2));
  REQUIRE_THROWS_AS(backward_sequence(b, tape, Vector(2, 0.0)), ConsistencyError);
  REQUIRE_THROWS_AS(backward_sequence(a, tape, Vector(3, 0.0)), ShapeError);
}
