#pragma once

// Recurrent cells (Elman RNN, LSTM), bidirectional wrapping, layer stacking,
// a linear output head, and exact gradients via backpropagation through time.
//
// The training path is batched: all windows of a series are pushed through the
// unrolled network together, so the per-timestep work is a handful of small
// matrix products instead of hundreds of matvecs. forward_sequence /
// backward_sequence are the batch-of-one wrappers.
//
// Cell semantics, with z_t = [h_{t-1}, x_t]:
//   i_t = sigmoid(w_i z_t + b_i)
//   f_t = sigmoid(w_f z_t + b_f)
//   g_t = tanh   (w_c z_t + b_c)
//   c_t = f_t * c_{t-1} + i_t * g_t
//   o_t = sigmoid(w_o z_t + b_o)
//   h_t = o_t * tanh(c_t)
// RNN (Elman): h_t = tanh(w z_t + b)
// Head: prediction = head_w * feature_{T-1} + head_b (last timestep only).

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "casecast/core.hpp"
#include "casecast/errors.hpp"

namespace casecast {

enum class ModelKind { Rnn, Lstm, BiLstm };

inline const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Rnn: return "RNN";
    case ModelKind::Lstm: return "LSTM";
    case ModelKind::BiLstm: return "BiLSTM";
  }
  return "?";
}

inline ModelKind kind_from_name(const std::string& s) {
  if (s == "RNN" || s == "rnn") return ModelKind::Rnn;
  if (s == "LSTM" || s == "lstm") return ModelKind::Lstm;
  if (s == "BiLSTM" || s == "bilstm" || s == "BILSTM") return ModelKind::BiLstm;
  throw ParameterError("unknown model kind '" + s + "' (expected rnn, lstm or bilstm)");
}

struct LstmCellParams {
  Matrix w_i, w_f, w_c, w_o;  // each hidden x (hidden + input)
  Vector b_i, b_f, b_c, b_o;  // each hidden

  static LstmCellParams zeros(std::size_t hidden, std::size_t input) {
    LstmCellParams p;
    p.w_i = p.w_f = p.w_c = p.w_o = Matrix(hidden, hidden + input);
    p.b_i = p.b_f = p.b_c = p.b_o = Vector(hidden, 0.0);
    return p;
  }
  std::size_t hidden() const { return b_i.size(); }
  std::size_t input() const { return w_i.cols - b_i.size(); }
};

struct RnnCellParams {
  Matrix w;  // hidden x (hidden + input)
  Vector b;

  static RnnCellParams zeros(std::size_t hidden, std::size_t input) {
    RnnCellParams p;
    p.w = Matrix(hidden, hidden + input);
    p.b = Vector(hidden, 0.0);
    return p;
  }
  std::size_t hidden() const { return b.size(); }
  std::size_t input() const { return w.cols - b.size(); }
};

struct LstmState {
  Vector h, c;
};

// One step of the LSTM cell on a single vector. The batched trainer below has
// its own fused loop; this is the reference form the tests pin down.
inline LstmState lstm_cell_step(const LstmCellParams& p, const LstmState& s, const Vector& x) {
  const std::size_t hidden = p.hidden();
  if (s.h.size() != hidden || s.c.size() != hidden) {
    throw ShapeError("lstm_cell_step: state size " + std::to_string(s.h.size()) +
                     " does not match cell hidden size " + std::to_string(hidden));
  }
  if (x.size() != p.input()) {
    throw ShapeError("lstm_cell_step: input length " + std::to_string(x.size()) +
                     " does not match cell input size " + std::to_string(p.input()));
  }
  Vector z(hidden + x.size());
  std::copy(s.h.begin(), s.h.end(), z.begin());
  std::copy(x.begin(), x.end(), z.begin() + hidden);

  Vector i = matvec(p.w_i, z), f = matvec(p.w_f, z), g = matvec(p.w_c, z), o = matvec(p.w_o, z);
  LstmState next;
  next.h.resize(hidden);
  next.c.resize(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    const double ik = sigmoid(i[k] + p.b_i[k]);
    const double fk = sigmoid(f[k] + p.b_f[k]);
    const double gk = std::tanh(g[k] + p.b_c[k]);
    const double ok = sigmoid(o[k] + p.b_o[k]);
    next.c[k] = fk * s.c[k] + ik * gk;
    next.h[k] = ok * std::tanh(next.c[k]);
  }
  return next;
}

inline Vector rnn_cell_step(const RnnCellParams& p, const Vector& h, const Vector& x) {
  const std::size_t hidden = p.hidden();
  if (h.size() != hidden) {
    throw ShapeError("rnn_cell_step: state size " + std::to_string(h.size()) +
                     " does not match cell hidden size " + std::to_string(hidden));
  }
  if (x.size() != p.input()) {
    throw ShapeError("rnn_cell_step: input length " + std::to_string(x.size()) +
                     " does not match cell input size " + std::to_string(p.input()));
  }
  Vector z(hidden + x.size());
  std::copy(h.begin(), h.end(), z.begin());
  std::copy(x.begin(), x.end(), z.begin() + hidden);
  Vector a = matvec(p.w, z);
  for (std::size_t k = 0; k < hidden; ++k) a[k] = std::tanh(a[k] + p.b[k]);
  return a;
}

struct StackedNet {
  ModelKind kind = ModelKind::Lstm;
  std::size_t input_dim = 0, output_dim = 0, hidden = 0, layer_count = 0;
  std::vector<LstmCellParams> lstm_fwd, lstm_bwd;  // bwd populated for BiLSTM only
  std::vector<RnnCellParams> rnn;                  // populated for RNN only
  Matrix head_w;  // output_dim x feature_dim
  Vector head_b;  // output_dim

  std::size_t feature_dim() const { return kind == ModelKind::BiLstm ? 2 * hidden : hidden; }
  std::size_t layer_input_dim(std::size_t layer) const {
    return layer == 0 ? input_dim : feature_dim();
  }
};

// Gradient buffers shape-matched to a StackedNet's parameters.
struct GradientSet {
  ModelKind kind = ModelKind::Lstm;
  std::vector<LstmCellParams> lstm_fwd, lstm_bwd;
  std::vector<RnnCellParams> rnn;
  Matrix head_w;
  Vector head_b;
};

inline GradientSet zero_gradients(const StackedNet& net) {
  GradientSet g;
  g.kind = net.kind;
  for (std::size_t l = 0; l < net.layer_count; ++l) {
    const std::size_t d_in = net.layer_input_dim(l);
    if (net.kind == ModelKind::Rnn) {
      g.rnn.push_back(RnnCellParams::zeros(net.hidden, d_in));
    } else {
      g.lstm_fwd.push_back(LstmCellParams::zeros(net.hidden, d_in));
      if (net.kind == ModelKind::BiLstm)
        g.lstm_bwd.push_back(LstmCellParams::zeros(net.hidden, d_in));
    }
  }
  g.head_w = Matrix(net.head_w.rows, net.head_w.cols);
  g.head_b = Vector(net.head_b.size(), 0.0);
  return g;
}

// Flat named view over every parameter tensor, in a fixed canonical order.
// The optimizer, checkpoints and the finite-difference tests all walk this.
struct NamedSpan {
  std::string name;
  double* data;
  std::size_t size;
  std::size_t rows, cols;  // cols == 0 marks a vector
};

namespace detail {

inline void append_spans(std::vector<NamedSpan>& out, const std::string& prefix,
                         LstmCellParams& c) {
  auto mat = [&](const char* n, Matrix& m) {
    out.push_back({prefix + n, m.data.data(), m.data.size(), m.rows, m.cols});
  };
  auto vec = [&](const char* n, Vector& v) {
    out.push_back({prefix + n, v.data(), v.size(), v.size(), 0});
  };
  mat(".w_i", c.w_i);
  mat(".w_f", c.w_f);
  mat(".w_c", c.w_c);
  mat(".w_o", c.w_o);
  vec(".b_i", c.b_i);
  vec(".b_f", c.b_f);
  vec(".b_c", c.b_c);
  vec(".b_o", c.b_o);
}

inline void append_spans(std::vector<NamedSpan>& out, const std::string& prefix,
                         RnnCellParams& c) {
  out.push_back({prefix + ".w", c.w.data.data(), c.w.data.size(), c.w.rows, c.w.cols});
  out.push_back({prefix + ".b", c.b.data(), c.b.size(), c.b.size(), 0});
}

template <typename NetLike>
std::vector<NamedSpan> tensor_spans(NetLike& n, std::size_t layer_count) {
  std::vector<NamedSpan> out;
  for (std::size_t l = 0; l < layer_count; ++l) {
    const std::string base = "layer" + std::to_string(l);
    if (n.kind == ModelKind::Rnn) {
      append_spans(out, base + ".fwd", n.rnn[l]);
    } else {
      append_spans(out, base + ".fwd", n.lstm_fwd[l]);
      if (n.kind == ModelKind::BiLstm) append_spans(out, base + ".bwd", n.lstm_bwd[l]);
    }
  }
  out.push_back({"head.w", n.head_w.data.data(), n.head_w.data.size(), n.head_w.rows,
                 n.head_w.cols});
  out.push_back({"head.b", n.head_b.data(), n.head_b.size(), n.head_b.size(), 0});
  return out;
}

}  // namespace detail

inline std::vector<NamedSpan> param_spans(StackedNet& net) {
  return detail::tensor_spans(net, net.layer_count);
}

inline std::vector<NamedSpan> grad_spans(GradientSet& g) {
  const std::size_t layers =
      g.kind == ModelKind::Rnn ? g.rnn.size() : g.lstm_fwd.size();
  return detail::tensor_spans(g, layers);
}

inline std::size_t param_count(const StackedNet& net) {
  std::size_t n = 0;
  auto spans = param_spans(const_cast<StackedNet&>(net));
  for (const auto& s : spans) n += s.size;
  return n;
}

// Fresh network: weights ~ uniform(-1/sqrt(hidden), +1/sqrt(hidden)), biases
// zero. Tensors are drawn in canonical span order, so a seed pins the net.
inline StackedNet init_net(ModelKind kind, std::size_t input_dim, std::size_t output_dim,
                           std::size_t hidden, std::size_t layer_count, Rng& rng) {
  if (input_dim < 1 || output_dim < 1 || hidden < 1 || layer_count < 1) {
    throw ParameterError("init_net: input_dim, output_dim, hidden and layer_count must be >= 1");
  }
  StackedNet net;
  net.kind = kind;
  net.input_dim = input_dim;
  net.output_dim = output_dim;
  net.hidden = hidden;
  net.layer_count = layer_count;
  for (std::size_t l = 0; l < layer_count; ++l) {
    const std::size_t d_in = net.layer_input_dim(l);
    if (kind == ModelKind::Rnn) {
      net.rnn.push_back(RnnCellParams::zeros(hidden, d_in));
    } else {
      net.lstm_fwd.push_back(LstmCellParams::zeros(hidden, d_in));
      if (kind == ModelKind::BiLstm) net.lstm_bwd.push_back(LstmCellParams::zeros(hidden, d_in));
    }
  }
  net.head_w = Matrix(output_dim, net.feature_dim());
  net.head_b = Vector(output_dim, 0.0);

  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& span : param_spans(net)) {
    if (span.cols == 0) continue;  // biases stay zero
    for (std::size_t i = 0; i < span.size; ++i) span.data[i] = rng.uniform(-bound, bound);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Batched unrolled forward/backward.

// Per-direction record of everything the backward pass needs. All matrices
// are batch x width and indexed by original timestep.
struct DirTape {
  std::vector<Matrix> z;                  // [h_prev | x], batch x (hidden+input)
  std::vector<Matrix> gi, gf, gg, go;     // post-activation gates (LSTM)
  std::vector<Matrix> c, tc;              // cell state, tanh(cell state) (LSTM)
  std::vector<Matrix> h;                  // hidden state (all cell kinds)
};

struct LayerTape {
  DirTape fwd, bwd;
};

struct Tape {
  ModelKind kind = ModelKind::Lstm;
  std::size_t input_dim = 0, output_dim = 0, hidden = 0, layer_count = 0;
  std::size_t batch = 0, steps = 0;
  std::vector<LayerTape> layer;
  Matrix top_feat;  // batch x feature_dim at the final timestep
};

namespace detail {

inline std::size_t dir_t(bool reverse, std::size_t steps, std::size_t k) {
  return reverse ? steps - 1 - k : k;
}

// a = bias rows + z * w^T, then activation applied by caller
inline Matrix gate_preact(const Matrix& z, const Matrix& w_t, const Vector& bias) {
  Matrix a(z.rows, bias.size());
  for (std::size_t r = 0; r < a.rows; ++r)
    std::copy(bias.begin(), bias.end(), a.row(r));
  matmul_acc(z, w_t, a);
  return a;
}

inline void sigmoid_inplace(Matrix& m) {
  for (auto& v : m.data) v = 1.0 / (1.0 + std::exp(-v));
}

inline void tanh_inplace(Matrix& m) {
  for (auto& v : m.data) v = std::tanh(v);
}

// z = [h_prev | x]
inline Matrix concat_state_input(const Matrix& h_prev, const Matrix& x) {
  Matrix z(x.rows, h_prev.cols + x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double* zr = z.row(r);
    std::copy(h_prev.row(r), h_prev.row(r) + h_prev.cols, zr);
    std::copy(x.row(r), x.row(r) + x.cols, zr + h_prev.cols);
  }
  return z;
}

inline DirTape lstm_dir_forward(const LstmCellParams& p, const std::vector<Matrix>& xs,
                                bool reverse) {
  const std::size_t steps = xs.size(), batch = xs[0].rows, hidden = p.hidden();
  const Matrix wti = transpose(p.w_i), wtf = transpose(p.w_f), wtc = transpose(p.w_c),
               wto = transpose(p.w_o);
  DirTape tp;
  tp.z.resize(steps);
  tp.gi.resize(steps);
  tp.gf.resize(steps);
  tp.gg.resize(steps);
  tp.go.resize(steps);
  tp.c.resize(steps);
  tp.tc.resize(steps);
  tp.h.resize(steps);

  Matrix h_prev(batch, hidden), c_prev(batch, hidden);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = dir_t(reverse, steps, k);
    Matrix z = concat_state_input(h_prev, xs[t]);
    Matrix gi = gate_preact(z, wti, p.b_i);
    Matrix gf = gate_preact(z, wtf, p.b_f);
    Matrix gg = gate_preact(z, wtc, p.b_c);
    Matrix go = gate_preact(z, wto, p.b_o);
    sigmoid_inplace(gi);
    sigmoid_inplace(gf);
    tanh_inplace(gg);
    sigmoid_inplace(go);

    Matrix c(batch, hidden), tc(batch, hidden), h(batch, hidden);
    for (std::size_t i = 0; i < c.data.size(); ++i) {
      c.data[i] = gf.data[i] * c_prev.data[i] + gi.data[i] * gg.data[i];
      tc.data[i] = std::tanh(c.data[i]);
      h.data[i] = go.data[i] * tc.data[i];
    }
    h_prev = h;
    c_prev = c;
    tp.z[t] = std::move(z);
    tp.gi[t] = std::move(gi);
    tp.gf[t] = std::move(gf);
    tp.gg[t] = std::move(gg);
    tp.go[t] = std::move(go);
    tp.c[t] = std::move(c);
    tp.tc[t] = std::move(tc);
    tp.h[t] = std::move(h);
  }
  return tp;
}

inline DirTape rnn_dir_forward(const RnnCellParams& p, const std::vector<Matrix>& xs,
                               bool reverse) {
  const std::size_t steps = xs.size(), batch = xs[0].rows, hidden = p.hidden();
  const Matrix wt = transpose(p.w);
  DirTape tp;
  tp.z.resize(steps);
  tp.h.resize(steps);
  Matrix h_prev(batch, hidden);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = dir_t(reverse, steps, k);
    Matrix z = concat_state_input(h_prev, xs[t]);
    Matrix h = gate_preact(z, wt, p.b);
    tanh_inplace(h);
    h_prev = h;
    tp.z[t] = std::move(z);
    tp.h[t] = std::move(h);
  }
  return tp;
}

// Backward through one LSTM direction. d_h_seq holds the loss gradient w.r.t.
// each timestep's hidden output; param gradients accumulate into gp; the
// return value is the gradient w.r.t. the layer's input sequence.
inline std::vector<Matrix> lstm_dir_backward(const LstmCellParams& p, const DirTape& tp,
                                             const std::vector<Matrix>& d_h_seq, bool reverse,
                                             LstmCellParams& gp) {
  const std::size_t steps = tp.h.size(), batch = tp.h[0].rows, hidden = p.hidden();
  const std::size_t d_in = tp.z[0].cols - hidden;
  std::vector<Matrix> d_x(steps);

  Matrix dh_carry(batch, hidden), dc_carry(batch, hidden);
  Matrix da_i(batch, hidden), da_f(batch, hidden), da_g(batch, hidden), da_o(batch, hidden);
  for (std::size_t k = steps; k-- > 0;) {
    const std::size_t t = dir_t(reverse, steps, k);
    const Matrix* c_prev = k > 0 ? &tp.c[dir_t(reverse, steps, k - 1)] : nullptr;

    const std::size_t n = batch * hidden;
    for (std::size_t i = 0; i < n; ++i) {
      const double dh = d_h_seq[t].data[i] + dh_carry.data[i];
      const double gi = tp.gi[t].data[i], gf = tp.gf[t].data[i], gg = tp.gg[t].data[i],
                   go = tp.go[t].data[i], tc = tp.tc[t].data[i];
      const double dc = dc_carry.data[i] + dh * go * (1.0 - tc * tc);
      da_o.data[i] = dh * tc * go * (1.0 - go);
      da_i.data[i] = dc * gg * gi * (1.0 - gi);
      da_g.data[i] = dc * gi * (1.0 - gg * gg);
      const double cp = c_prev ? c_prev->data[i] : 0.0;
      da_f.data[i] = dc * cp * gf * (1.0 - gf);
      dc_carry.data[i] = dc * gf;
    }

    Matrix dz(batch, hidden + d_in);
    matmul_acc(da_i, p.w_i, dz);
    matmul_acc(da_f, p.w_f, dz);
    matmul_acc(da_g, p.w_c, dz);
    matmul_acc(da_o, p.w_o, dz);

    matmul_at_b_acc(da_i, tp.z[t], gp.w_i);
    matmul_at_b_acc(da_f, tp.z[t], gp.w_f);
    matmul_at_b_acc(da_g, tp.z[t], gp.w_c);
    matmul_at_b_acc(da_o, tp.z[t], gp.w_o);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t j = 0; j < hidden; ++j) {
        gp.b_i[j] += da_i(r, j);
        gp.b_f[j] += da_f(r, j);
        gp.b_c[j] += da_g(r, j);
        gp.b_o[j] += da_o(r, j);
      }
    }

    Matrix dxt(batch, d_in);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* zr = dz.row(r);
      std::copy(zr, zr + hidden, dh_carry.row(r));
      std::copy(zr + hidden, zr + hidden + d_in, dxt.row(r));
    }
    d_x[t] = std::move(dxt);
  }
  return d_x;
}

inline std::vector<Matrix> rnn_dir_backward(const RnnCellParams& p, const DirTape& tp,
                                            const std::vector<Matrix>& d_h_seq, bool reverse,
                                            RnnCellParams& gp) {
  const std::size_t steps = tp.h.size(), batch = tp.h[0].rows, hidden = p.hidden();
  const std::size_t d_in = tp.z[0].cols - hidden;
  std::vector<Matrix> d_x(steps);

  Matrix dh_carry(batch, hidden), da(batch, hidden);
  for (std::size_t k = steps; k-- > 0;) {
    const std::size_t t = dir_t(reverse, steps, k);
    const std::size_t n = batch * hidden;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = tp.h[t].data[i];
      da.data[i] = (d_h_seq[t].data[i] + dh_carry.data[i]) * (1.0 - h * h);
    }
    Matrix dz(batch, hidden + d_in);
    matmul_acc(da, p.w, dz);
    matmul_at_b_acc(da, tp.z[t], gp.w);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t j = 0; j < hidden; ++j) gp.b[j] += da(r, j);

    Matrix dxt(batch, d_in);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* zr = dz.row(r);
      std::copy(zr, zr + hidden, dh_carry.row(r));
      std::copy(zr + hidden, zr + hidden + d_in, dxt.row(r));
    }
    d_x[t] = std::move(dxt);
  }
  return d_x;
}

inline Matrix concat_features(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    double* o = out.row(r);
    std::copy(a.row(r), a.row(r) + a.cols, o);
    std::copy(b.row(r), b.row(r) + b.cols, o + a.cols);
  }
  return out;
}

}  // namespace detail

struct ForwardResult {
  Matrix pred;  // batch x output_dim
  Tape tape;
};

// Runs every layer over the whole (batched) sequence. BiLSTM layers run one
// left-to-right and one right-to-left pass and concatenate per-timestep
// features; the head reads the final timestep of the top layer.
inline ForwardResult forward_batch(const StackedNet& net, const std::vector<Matrix>& xs) {
  if (xs.empty()) throw ParameterError("forward: empty input sequence");
  const std::size_t batch = xs[0].rows;
  for (const auto& x : xs) {
    if (x.cols != net.input_dim || x.rows != batch) {
      throw ShapeError("forward: input block " + shape_str(x) + " does not match input_dim " +
                       std::to_string(net.input_dim) + " / batch " + std::to_string(batch));
    }
  }
  const std::size_t steps = xs.size();

  Tape tape;
  tape.kind = net.kind;
  tape.input_dim = net.input_dim;
  tape.output_dim = net.output_dim;
  tape.hidden = net.hidden;
  tape.layer_count = net.layer_count;
  tape.batch = batch;
  tape.steps = steps;
  tape.layer.resize(net.layer_count);

  std::vector<Matrix> feats = xs;
  for (std::size_t l = 0; l < net.layer_count; ++l) {
    LayerTape& lt = tape.layer[l];
    if (net.kind == ModelKind::Rnn) {
      lt.fwd = detail::rnn_dir_forward(net.rnn[l], feats, false);
      feats = lt.fwd.h;
    } else if (net.kind == ModelKind::Lstm) {
      lt.fwd = detail::lstm_dir_forward(net.lstm_fwd[l], feats, false);
      feats = lt.fwd.h;
    } else {
      lt.fwd = detail::lstm_dir_forward(net.lstm_fwd[l], feats, false);
      lt.bwd = detail::lstm_dir_forward(net.lstm_bwd[l], feats, true);
      std::vector<Matrix> merged(steps);
      for (std::size_t t = 0; t < steps; ++t)
        merged[t] = detail::concat_features(lt.fwd.h[t], lt.bwd.h[t]);
      feats = std::move(merged);
    }
  }
  tape.top_feat = feats[steps - 1];

  ForwardResult out;
  out.pred = Matrix(batch, net.output_dim);
  for (std::size_t r = 0; r < batch; ++r)
    std::copy(net.head_b.begin(), net.head_b.end(), out.pred.row(r));
  const Matrix head_wt = transpose(net.head_w);
  matmul_acc(tape.top_feat, head_wt, out.pred);
  out.tape = std::move(tape);
  return out;
}

// Exact gradients of a scalar loss whose gradient w.r.t. the prediction block
// is pred_grad. Verified against central finite differences in the tests.
inline GradientSet backward_batch(const StackedNet& net, const Tape& tape,
                                  const Matrix& pred_grad) {
  if (tape.kind != net.kind || tape.input_dim != net.input_dim ||
      tape.output_dim != net.output_dim || tape.hidden != net.hidden ||
      tape.layer_count != net.layer_count || tape.steps == 0) {
    throw ConsistencyError("backward: tape does not match network");
  }
  if (pred_grad.rows != tape.batch || pred_grad.cols != net.output_dim) {
    throw ShapeError("backward: prediction gradient " + shape_str(pred_grad) +
                     " does not match batch " + std::to_string(tape.batch) + " x output_dim " +
                     std::to_string(net.output_dim));
  }

  GradientSet gs = zero_gradients(net);

  matmul_at_b_acc(pred_grad, tape.top_feat, gs.head_w);
  for (std::size_t r = 0; r < pred_grad.rows; ++r)
    for (std::size_t j = 0; j < pred_grad.cols; ++j) gs.head_b[j] += pred_grad(r, j);

  Matrix d_top(tape.batch, net.feature_dim());
  matmul_acc(pred_grad, net.head_w, d_top);

  // Loss touches only the final timestep of the top layer.
  std::vector<Matrix> d_feat(tape.steps);
  for (std::size_t t = 0; t < tape.steps; ++t)
    d_feat[t] = Matrix(tape.batch, net.feature_dim());
  d_feat[tape.steps - 1] = std::move(d_top);

  for (std::size_t l = net.layer_count; l-- > 0;) {
    const LayerTape& lt = tape.layer[l];
    if (net.kind == ModelKind::Rnn) {
      d_feat = detail::rnn_dir_backward(net.rnn[l], lt.fwd, d_feat, false, gs.rnn[l]);
    } else if (net.kind == ModelKind::Lstm) {
      d_feat = detail::lstm_dir_backward(net.lstm_fwd[l], lt.fwd, d_feat, false, gs.lstm_fwd[l]);
    } else {
      std::vector<Matrix> d_fwd(tape.steps), d_bwd(tape.steps);
      for (std::size_t t = 0; t < tape.steps; ++t) {
        d_fwd[t] = Matrix(tape.batch, net.hidden);
        d_bwd[t] = Matrix(tape.batch, net.hidden);
        for (std::size_t r = 0; r < tape.batch; ++r) {
          const double* src = d_feat[t].row(r);
          std::copy(src, src + net.hidden, d_fwd[t].row(r));
          std::copy(src + net.hidden, src + 2 * net.hidden, d_bwd[t].row(r));
        }
      }
      auto d_in_f =
          detail::lstm_dir_backward(net.lstm_fwd[l], lt.fwd, d_fwd, false, gs.lstm_fwd[l]);
      auto d_in_b =
          detail::lstm_dir_backward(net.lstm_bwd[l], lt.bwd, d_bwd, true, gs.lstm_bwd[l]);
      for (std::size_t t = 0; t < tape.steps; ++t)
        for (std::size_t i = 0; i < d_in_f[t].data.size(); ++i)
          d_in_f[t].data[i] += d_in_b[t].data[i];
      d_feat = std::move(d_in_f);
    }
  }
  return gs;
}

inline std::pair<Vector, Tape> forward_sequence(const StackedNet& net,
                                                const std::vector<Vector>& xs) {
  if (xs.empty()) throw ParameterError("forward_sequence: empty input sequence");
  std::vector<Matrix> blocks(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    if (xs[t].size() != net.input_dim) {
      throw ShapeError("forward_sequence: input length " + std::to_string(xs[t].size()) +
                       " does not match input_dim " + std::to_string(net.input_dim));
    }
    blocks[t] = Matrix(1, xs[t].size());
    std::copy(xs[t].begin(), xs[t].end(), blocks[t].data.begin());
  }
  ForwardResult r = forward_batch(net, blocks);
  Vector pred(r.pred.data.begin(), r.pred.data.end());
  return {std::move(pred), std::move(r.tape)};
}

inline GradientSet backward_sequence(const StackedNet& net, const Tape& tape,
                                     const Vector& loss_grad) {
  if (tape.batch != 1) {
    throw ConsistencyError("backward_sequence: tape was produced by a batched forward");
  }
  if (loss_grad.size() != net.output_dim) {
    throw ShapeError("backward_sequence: loss gradient length " +
                     std::to_string(loss_grad.size()) + " does not match output_dim " +
                     std::to_string(net.output_dim));
  }
  Matrix pg(1, loss_grad.size());
  std::copy(loss_grad.begin(), loss_grad.end(), pg.data.begin());
  return backward_batch(net, tape, pg);
}

}  // namespace casecast
