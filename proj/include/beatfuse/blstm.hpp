#pragma once

// Bidirectional LSTM stacks with exact backpropagation through time: the
// shared substrate for the feature separator, the three trackers and the
// fuser. Training math is 64-bit throughout.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "beatfuse/beats.hpp"
#include "beatfuse/common.hpp"

namespace beatfuse {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class OutputKind { softmax3, sigmoid_mask };

inline std::string to_string(OutputKind k) {
  return k == OutputKind::softmax3 ? "softmax3" : "sigmoid_mask";
}

inline OutputKind output_kind_from_string(const std::string& s) {
  if (s == "softmax3") return OutputKind::softmax3;
  if (s == "sigmoid_mask") return OutputKind::sigmoid_mask;
  throw data_error("unknown output kind: " + s);
}

// One direction of one layer. Gate rows are packed input, forget, cell
// candidate, output (H rows each).
struct LstmDirection {
  MatrixXd w_in;   // 4H x input_dim
  MatrixXd w_rec;  // 4H x H
  VectorXd bias;   // 4H
};

struct LstmLayer {
  int input_dim = 0;
  int hidden_dim = 0;
  LstmDirection fwd;
  LstmDirection bwd;
};

struct OutputHead {
  MatrixXd weight;  // output_dim x 2H
  VectorXd bias;    // output_dim
};

struct BlstmStack {
  std::vector<LstmLayer> layers;
  OutputHead head;
  OutputKind output_kind = OutputKind::softmax3;

  int input_dim() const { return layers.empty() ? 0 : layers.front().input_dim; }
  int output_dim() const { return static_cast<int>(head.weight.rows()); }
  int last_hidden_dim() const { return layers.empty() ? 0 : 2 * layers.back().hidden_dim; }
  std::vector<int> hidden_dims() const {
    std::vector<int> dims;
    for (const auto& l : layers) dims.push_back(l.hidden_dim);
    return dims;
  }
};

// Fixed tensor enumeration order; serialization, initialization and the
// optimizer all follow it.
template <class Stack, class F>
void for_each_tensor(Stack& stack, F&& f) {
  for (auto& layer : stack.layers) {
    f(layer.fwd.w_in);
    f(layer.fwd.w_rec);
    f(layer.fwd.bias);
    f(layer.bwd.w_in);
    f(layer.bwd.w_rec);
    f(layer.bwd.bias);
  }
  f(stack.head.weight);
  f(stack.head.bias);
}

struct StackGrads {
  std::vector<LstmLayer> layers;
  OutputHead head;
};

template <class F>
void for_each_tensor(StackGrads& g, F&& f) {
  for (auto& layer : g.layers) {
    f(layer.fwd.w_in);
    f(layer.fwd.w_rec);
    f(layer.fwd.bias);
    f(layer.bwd.w_in);
    f(layer.bwd.w_rec);
    f(layer.bwd.bias);
  }
  f(g.head.weight);
  f(g.head.bias);
}

template <class F>
void for_each_tensor(const StackGrads& g, F&& f) {
  for (const auto& layer : g.layers) {
    f(layer.fwd.w_in);
    f(layer.fwd.w_rec);
    f(layer.fwd.bias);
    f(layer.bwd.w_in);
    f(layer.bwd.w_rec);
    f(layer.bwd.bias);
  }
  f(g.head.weight);
  f(g.head.bias);
}

inline StackGrads zero_grads(const BlstmStack& stack) {
  StackGrads g;
  g.layers.resize(stack.layers.size());
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const auto& src = stack.layers[l];
    auto& dst = g.layers[l];
    dst.input_dim = src.input_dim;
    dst.hidden_dim = src.hidden_dim;
    for (auto* dir : {&dst.fwd, &dst.bwd}) {
      dir->w_in = MatrixXd::Zero(4 * src.hidden_dim, src.input_dim);
      dir->w_rec = MatrixXd::Zero(4 * src.hidden_dim, src.hidden_dim);
      dir->bias = VectorXd::Zero(4 * src.hidden_dim);
    }
  }
  g.head.weight = MatrixXd::Zero(stack.head.weight.rows(), stack.head.weight.cols());
  g.head.bias = VectorXd::Zero(stack.head.bias.size());
  return g;
}

inline void validate_stack(const BlstmStack& stack) {
  if (stack.layers.empty()) throw config_error("blstm: stack needs at least one layer");
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const auto& layer = stack.layers[l];
    if (layer.hidden_dim <= 0 || layer.input_dim <= 0)
      throw config_error("blstm: non-positive layer dimension");
    if (l > 0 && layer.input_dim != 2 * stack.layers[l - 1].hidden_dim)
      throw config_error("blstm: layer input must match 2x previous hidden size");
    for (const auto* dir : {&layer.fwd, &layer.bwd}) {
      if (dir->w_in.rows() != 4 * layer.hidden_dim || dir->w_in.cols() != layer.input_dim ||
          dir->w_rec.rows() != 4 * layer.hidden_dim ||
          dir->w_rec.cols() != layer.hidden_dim || dir->bias.size() != 4 * layer.hidden_dim)
        throw config_error("blstm: parameter tensor shape mismatch");
    }
  }
  if (stack.head.weight.cols() != stack.last_hidden_dim() ||
      stack.head.bias.size() != stack.head.weight.rows())
    throw config_error("blstm: output head shape mismatch");
}

// Uniform [-0.1, 0.1] initialization from one explicit seed.
inline BlstmStack make_blstm_stack(int input_dim, const std::vector<int>& hidden_dims,
                                   int output_dim, OutputKind kind, std::uint64_t seed) {
  if (input_dim <= 0 || output_dim <= 0 || hidden_dims.empty())
    throw config_error("blstm: bad stack dimensions");
  BlstmStack stack;
  stack.output_kind = kind;
  int in = input_dim;
  for (int h : hidden_dims) {
    if (h <= 0) throw config_error("blstm: bad hidden size");
    LstmLayer layer;
    layer.input_dim = in;
    layer.hidden_dim = h;
    for (auto* dir : {&layer.fwd, &layer.bwd}) {
      dir->w_in.resize(4 * h, in);
      dir->w_rec.resize(4 * h, h);
      dir->bias.resize(4 * h);
    }
    stack.layers.push_back(std::move(layer));
    in = 2 * h;
  }
  stack.head.weight.resize(output_dim, in);
  stack.head.bias.resize(output_dim);

  SeededRng rng(seed);
  for_each_tensor(stack, [&](auto& tensor) {
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c)
        tensor(r, c) = rng.uniform(-0.1, 0.1);
  });
  return stack;
}

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// Single gated update, exposed for direct testing:
// i,f,o = logistic(W [x,h] + b), g = tanh(.), c' = f.c + i.g, h' = o.tanh(c').
struct CellState {
  VectorXd h;
  VectorXd c;
};

inline CellState lstm_cell_forward(const VectorXd& x, const VectorXd& h, const VectorXd& c,
                                   const LstmDirection& p) {
  const int hidden = static_cast<int>(p.w_rec.cols());
  if (x.size() != p.w_in.cols() || h.size() != hidden || c.size() != hidden)
    throw config_error("lstm_cell_forward: dimension mismatch");
  if (!x.allFinite() || !h.allFinite() || !c.allFinite())
    throw numeric_error("lstm_cell_forward: non-finite input");
  const VectorXd z = p.w_in * x + p.w_rec * h + p.bias;
  CellState out;
  out.c.resize(hidden);
  out.h.resize(hidden);
  for (int j = 0; j < hidden; ++j) {
    const double gi = detail::logistic(z(j));
    const double gf = detail::logistic(z(hidden + j));
    const double gg = std::tanh(z(2 * hidden + j));
    const double go = detail::logistic(z(3 * hidden + j));
    out.c(j) = gf * c(j) + gi * gg;
    out.h(j) = go * std::tanh(out.c(j));
  }
  return out;
}

// Per-direction forward cache; everything BPTT needs.
struct DirTrace {
  MatrixXd gate_i, gate_f, gate_g, gate_o;  // H x T, post-activation
  MatrixXd cell, cell_tanh, hidden;         // H x T
};

struct LayerTrace {
  MatrixXd input;  // input_dim x T
  DirTrace fwd, bwd;
};

struct StackTrace {
  std::vector<LayerTrace> layers;
  MatrixXd last_hidden;  // 2H x T
  MatrixXd preact;       // output_dim x T
  MatrixXd output;       // output_dim x T
};

namespace detail {

// Runs one direction over the whole sequence; returns hidden states H x T
// indexed by absolute time. `reverse` processes t = T-1 .. 0.
inline MatrixXd direction_forward(const MatrixXd& x, const LstmDirection& p, bool reverse,
                                  DirTrace* trace) {
  const int T = static_cast<int>(x.cols());
  const int H = static_cast<int>(p.w_rec.cols());
  MatrixXd zin = p.w_in * x;  // bulk input projection for all frames
  zin.colwise() += p.bias;

  MatrixXd hidden(H, T);
  if (trace) {
    trace->gate_i.resize(H, T);
    trace->gate_f.resize(H, T);
    trace->gate_g.resize(H, T);
    trace->gate_o.resize(H, T);
    trace->cell.resize(H, T);
    trace->cell_tanh.resize(H, T);
  }

  VectorXd h = VectorXd::Zero(H);
  VectorXd c = VectorXd::Zero(H);
  VectorXd z(4 * H);
  for (int step = 0; step < T; ++step) {
    const int t = reverse ? T - 1 - step : step;
    z.noalias() = p.w_rec * h;
    z += zin.col(t);
    const auto gi = (1.0 / (1.0 + (-z.segment(0, H).array()).exp())).eval();
    const auto gf = (1.0 / (1.0 + (-z.segment(H, H).array()).exp())).eval();
    const auto gg = z.segment(2 * H, H).array().tanh().eval();
    const auto go = (1.0 / (1.0 + (-z.segment(3 * H, H).array()).exp())).eval();
    c = (gf * c.array() + gi * gg).matrix();
    const auto ct = c.array().tanh().eval();
    h = (go * ct).matrix();
    hidden.col(t) = h;
    if (trace) {
      trace->gate_i.col(t) = gi.matrix();
      trace->gate_f.col(t) = gf.matrix();
      trace->gate_g.col(t) = gg.matrix();
      trace->gate_o.col(t) = go.matrix();
      trace->cell.col(t) = c;
      trace->cell_tanh.col(t) = ct.matrix();
    }
  }
  if (trace) trace->hidden = hidden;
  return hidden;
}

inline MatrixXd softmax_columns(const MatrixXd& preact) {
  MatrixXd out(preact.rows(), preact.cols());
  for (Eigen::Index t = 0; t < preact.cols(); ++t) {
    const VectorXd shifted = preact.col(t).array() - preact.col(t).maxCoeff();
    const VectorXd e = shifted.array().exp();
    out.col(t) = e / e.sum();
  }
  return out;
}

}  // namespace detail

struct BlstmResult {
  MatrixXd output;       // output_dim x T (probabilities or mask values)
  MatrixXd last_hidden;  // 2H x T (final layer states before the head)
};

// seq is D x T, one column per frame. Pass a trace to keep the caches
// needed by blstm_backward.
inline BlstmResult blstm_forward(const MatrixXd& seq, const BlstmStack& stack,
                                 StackTrace* trace = nullptr) {
  validate_stack(stack);
  if (seq.rows() != stack.input_dim())
    throw config_error("blstm_forward: input dimension mismatch");
  const int T = static_cast<int>(seq.cols());
  if (T < 1) throw config_error("blstm_forward: empty sequence");

  if (trace) trace->layers.resize(stack.layers.size());
  MatrixXd cur = seq;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    const auto& layer = stack.layers[l];
    LayerTrace* lt = trace ? &trace->layers[l] : nullptr;
    if (lt) lt->input = cur;
    const MatrixXd hf =
        detail::direction_forward(cur, layer.fwd, false, lt ? &lt->fwd : nullptr);
    const MatrixXd hb =
        detail::direction_forward(cur, layer.bwd, true, lt ? &lt->bwd : nullptr);
    MatrixXd next(2 * layer.hidden_dim, T);
    next.topRows(layer.hidden_dim) = hf;
    next.bottomRows(layer.hidden_dim) = hb;
    cur = std::move(next);
  }

  BlstmResult res;
  res.last_hidden = cur;
  MatrixXd preact = stack.head.weight * cur;
  preact.colwise() += stack.head.bias;
  if (stack.output_kind == OutputKind::softmax3) {
    res.output = detail::softmax_columns(preact);
  } else {
    res.output = preact.unaryExpr([](double v) { return detail::logistic(v); });
  }
  if (trace) {
    trace->last_hidden = res.last_hidden;
    trace->preact = std::move(preact);
    trace->output = res.output;
  }
  return res;
}

namespace detail {

// BPTT for one direction. d_h_ext is the gradient arriving at this
// direction's hidden states (H x T, absolute time); accumulates parameter
// gradients into g and input gradients into d_x.
inline void direction_backward(const LstmDirection& p, const DirTrace& tr, const MatrixXd& x,
                               const Eigen::Ref<const MatrixXd>& d_h_ext, bool reverse,
                               LstmDirection& g, MatrixXd& d_x) {
  const int T = static_cast<int>(x.cols());
  const int H = static_cast<int>(p.w_rec.cols());
  MatrixXd dz(4 * H, T);
  VectorXd dh_rec = VectorXd::Zero(H);
  VectorXd dc_rec = VectorXd::Zero(H);
  VectorXd zero = VectorXd::Zero(H);

  for (int step = T - 1; step >= 0; --step) {
    const int t = reverse ? T - 1 - step : step;
    const auto i = tr.gate_i.col(t).array();
    const auto f = tr.gate_f.col(t).array();
    const auto gg = tr.gate_g.col(t).array();
    const auto o = tr.gate_o.col(t).array();
    const auto ct = tr.cell_tanh.col(t).array();

    const VectorXd dh = d_h_ext.col(t) + dh_rec;
    const auto d_o = (dh.array() * ct).eval();
    const VectorXd dc =
        ((dh.array() * o) * (1.0 - ct.square()) + dc_rec.array()).matrix();

    const int prev = reverse ? t + 1 : t - 1;
    const VectorXd c_prev = (prev >= 0 && prev < T) ? VectorXd(tr.cell.col(prev)) : zero;

    const auto d_i = (dc.array() * gg).eval();
    const auto d_g = (dc.array() * i).eval();
    const auto d_f = (dc.array() * c_prev.array()).eval();
    dc_rec = (dc.array() * f).matrix();

    dz.col(t).segment(0, H) = (d_i * i * (1.0 - i)).matrix();
    dz.col(t).segment(H, H) = (d_f * f * (1.0 - f)).matrix();
    dz.col(t).segment(2 * H, H) = (d_g * (1.0 - gg.square())).matrix();
    dz.col(t).segment(3 * H, H) = (d_o * o * (1.0 - o)).matrix();

    dh_rec.noalias() = p.w_rec.transpose() * dz.col(t);
  }

  g.w_in.noalias() += dz * x.transpose();
  g.bias += dz.rowwise().sum();
  if (T > 1) {
    if (!reverse)
      g.w_rec.noalias() += dz.rightCols(T - 1) * tr.hidden.leftCols(T - 1).transpose();
    else
      g.w_rec.noalias() += dz.leftCols(T - 1) * tr.hidden.rightCols(T - 1).transpose();
  }
  d_x.noalias() += p.w_in.transpose() * dz;
}

}  // namespace detail

// Exact gradients of any loss whose gradient w.r.t. the head pre-activations
// is d_preact (output_dim x T). Gradients never cross the stack boundary:
// the sequence input is treated as a constant.
inline StackGrads blstm_backward(const BlstmStack& stack, const StackTrace& trace,
                                 const MatrixXd& d_preact) {
  if (d_preact.rows() != stack.output_dim() ||
      d_preact.cols() != trace.last_hidden.cols())
    throw config_error("blstm_backward: gradient shape mismatch");
  StackGrads g = zero_grads(stack);
  g.head.weight.noalias() = d_preact * trace.last_hidden.transpose();
  g.head.bias = d_preact.rowwise().sum();

  MatrixXd d_hidden = stack.head.weight.transpose() * d_preact;  // 2H x T
  for (int l = static_cast<int>(stack.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = stack.layers[l];
    const auto& lt = trace.layers[l];
    const int H = layer.hidden_dim;
    MatrixXd d_input = MatrixXd::Zero(layer.input_dim, lt.input.cols());
    detail::direction_backward(layer.fwd, lt.fwd, lt.input, d_hidden.topRows(H), false,
                               g.layers[l].fwd, d_input);
    detail::direction_backward(layer.bwd, lt.bwd, lt.input, d_hidden.bottomRows(H), true,
                               g.layers[l].bwd, d_input);
    d_hidden = std::move(d_input);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Activations and the weighted cross-entropy training loss.

// 3 x T per-frame distribution; rows beat, downbeat, non-beat.
struct ActivationMatrix {
  MatrixXd data;
  double frame_rate = 0.0;

  int frames() const { return static_cast<int>(data.cols()); }
};

inline void validate_activation(const ActivationMatrix& act, double tol = 1e-9) {
  if (act.data.rows() != 3) throw data_error("activation: expected 3 rows");
  for (Eigen::Index t = 0; t < act.data.cols(); ++t) {
    const double sum = act.data.col(t).sum();
    if (std::abs(sum - 1.0) > tol || act.data.col(t).minCoeff() < -tol ||
        act.data.col(t).maxCoeff() > 1.0 + tol)
      throw data_error("activation: column " + std::to_string(t) +
                       " is not a probability distribution");
  }
}

struct LossWeights {
  double beat = 67.0;
  double downbeat = 200.0;
  double nonbeat = 1.0;

  double at(int cls) const {
    switch (cls) {
      case kBeat: return beat;
      case kDownbeat: return downbeat;
      default: return nonbeat;
    }
  }
};

// Probabilities are clamped to >= 1e-12 inside the log to keep the loss
// finite; the clamp never binds for converged models.
inline constexpr double kProbClamp = 1e-12;

inline double weighted_ce_from_probs(const MatrixXd& probs, const FrameLabels& labels,
                                     const LossWeights& weights = {}) {
  const int T = static_cast<int>(probs.cols());
  if (labels.frames() != T)
    throw config_error("weighted_cross_entropy: label/frame count mismatch");
  double loss = 0.0;
  for (int t = 0; t < T; ++t) {
    const int cls = labels.classes[t];
    loss += weights.at(cls) * -std::log(std::max(probs(cls, t), kProbClamp));
  }
  return loss / T;
}

inline double weighted_cross_entropy(const ActivationMatrix& act, const FrameLabels& labels,
                                     const LossWeights& weights = {}) {
  return weighted_ce_from_probs(act.data, labels, weights);
}

// Gradient w.r.t. softmax pre-activations: (w[y]/T) (p - e_y) per frame;
// zero where the clamp binds (the clamped loss is locally constant there).
inline MatrixXd weighted_ce_preact_grad(const MatrixXd& probs, const FrameLabels& labels,
                                        const LossWeights& weights = {}) {
  const int T = static_cast<int>(probs.cols());
  if (labels.frames() != T)
    throw config_error("weighted_cross_entropy: label/frame count mismatch");
  MatrixXd d = MatrixXd::Zero(probs.rows(), T);
  for (int t = 0; t < T; ++t) {
    const int cls = labels.classes[t];
    if (probs(cls, t) <= kProbClamp) continue;
    d.col(t) = (weights.at(cls) / T) * probs.col(t);
    d(cls, t) -= weights.at(cls) / T;
  }
  return d;
}

}  // namespace beatfuse
