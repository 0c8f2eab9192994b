#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "mmqa/autodiff.hpp"
#include "mmqa/error.hpp"
#include "mmqa/random.hpp"
#include "mmqa/tensor.hpp"

namespace mmqa {

enum class CellKind { gru, lstm };
enum class Pooling { max, average };

/// `standard` is the textbook GRU. `literal` drops the update-gate
/// interpolation: h_t = sigmoid(xW + r ⊙ (h_prev U) + b).
enum class GruVariant { standard, literal };

struct EncoderOptions {
  GruVariant gru_variant = GruVariant::standard;
  Pooling pooling = Pooling::max;
};

/// Parameter slots of one GRU cell; matrices act on row vectors (x W).
struct GruCell {
  std::size_t input = 0, hidden = 0;
  std::size_t w_z = 0, w_r = 0, w = 0;
  std::size_t u_z = 0, u_r = 0, u = 0;
  std::size_t b_z = 0, b_r = 0, b = 0;
};

/// Four-gate LSTM: input, forget, output, candidate.
struct LstmCell {
  std::size_t input = 0, hidden = 0;
  std::size_t w_i = 0, w_f = 0, w_o = 0, w_g = 0;
  std::size_t u_i = 0, u_f = 0, u_o = 0, u_g = 0;
  std::size_t b_i = 0, b_f = 0, b_o = 0, b_g = 0;
};

using Cell = std::variant<GruCell, LstmCell>;

inline Tensor uniform_init(std::size_t rows, std::size_t cols, double k, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-k, k);
  return t;
}

/// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weight.
inline std::size_t add_weight(Parameters& params, const std::string& name, std::size_t fan_in,
                              std::size_t fan_out, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return params.add(name, uniform_init(fan_in, fan_out, k, rng));
}

inline std::size_t add_bias(Parameters& params, const std::string& name, std::size_t width,
                            double fill = 0.0) {
  return params.add(name, Tensor(1, width, fill));
}

inline GruCell make_gru_cell(Parameters& params, const std::string& prefix, std::size_t input,
                             std::size_t hidden, Rng& rng) {
  GruCell c;
  c.input = input;
  c.hidden = hidden;
  c.w_z = add_weight(params, prefix + ".w_z", input, hidden, rng);
  c.w_r = add_weight(params, prefix + ".w_r", input, hidden, rng);
  c.w = add_weight(params, prefix + ".w", input, hidden, rng);
  c.u_z = add_weight(params, prefix + ".u_z", hidden, hidden, rng);
  c.u_r = add_weight(params, prefix + ".u_r", hidden, hidden, rng);
  c.u = add_weight(params, prefix + ".u", hidden, hidden, rng);
  c.b_z = add_bias(params, prefix + ".b_z", hidden);
  c.b_r = add_bias(params, prefix + ".b_r", hidden);
  c.b = add_bias(params, prefix + ".b", hidden);
  return c;
}

inline LstmCell make_lstm_cell(Parameters& params, const std::string& prefix, std::size_t input,
                               std::size_t hidden, Rng& rng) {
  LstmCell c;
  c.input = input;
  c.hidden = hidden;
  c.w_i = add_weight(params, prefix + ".w_i", input, hidden, rng);
  c.w_f = add_weight(params, prefix + ".w_f", input, hidden, rng);
  c.w_o = add_weight(params, prefix + ".w_o", input, hidden, rng);
  c.w_g = add_weight(params, prefix + ".w_g", input, hidden, rng);
  c.u_i = add_weight(params, prefix + ".u_i", hidden, hidden, rng);
  c.u_f = add_weight(params, prefix + ".u_f", hidden, hidden, rng);
  c.u_o = add_weight(params, prefix + ".u_o", hidden, hidden, rng);
  c.u_g = add_weight(params, prefix + ".u_g", hidden, hidden, rng);
  c.b_i = add_bias(params, prefix + ".b_i", hidden);
  c.b_f = add_bias(params, prefix + ".b_f", hidden, 1.0);
  c.b_o = add_bias(params, prefix + ".b_o", hidden);
  c.b_g = add_bias(params, prefix + ".b_g", hidden);
  return c;
}

inline Cell make_cell(CellKind kind, Parameters& params, const std::string& prefix,
                      std::size_t input, std::size_t hidden, Rng& rng) {
  if (kind == CellKind::lstm) return make_lstm_cell(params, prefix, input, hidden, rng);
  return make_gru_cell(params, prefix, input, hidden, rng);
}

inline std::size_t cell_hidden(const Cell& c) {
  return std::visit([](const auto& cell) { return cell.hidden; }, c);
}

inline std::size_t cell_input(const Cell& c) {
  return std::visit([](const auto& cell) { return cell.input; }, c);
}

inline void check_step_shapes(const Tape& tape, Var x, Var h, std::size_t in, std::size_t hidden) {
  const Tensor& xv = tape.value(x);
  const Tensor& hv = tape.value(h);
  if (xv.cols() != in || hv.cols() != hidden || hv.rows() != xv.rows()) {
    throw ShapeError("recurrent step: input " + xv.shape_string() + " / state " +
                     hv.shape_string() + " incompatible with cell (" + std::to_string(in) +
                     " -> " + std::to_string(hidden) + ")");
  }
}

/// Hidden update from precomputed input projections (x W + b for each gate).
inline Var gru_update(Tape& tape, const Parameters& params, const GruCell& cell, Var xz, Var xr,
                      Var xh, Var h_prev, GruVariant variant) {
  Var z = sigmoid(add(xz, matmul(h_prev, tape.param(params, cell.u_z))));
  Var r = sigmoid(add(xr, matmul(h_prev, tape.param(params, cell.u_r))));
  if (variant == GruVariant::literal) {
    return sigmoid(add(xh, mul(r, matmul(h_prev, tape.param(params, cell.u)))));
  }
  Var candidate = tanh(add(xh, matmul(mul(r, h_prev), tape.param(params, cell.u))));
  return add(mul(one_minus(z), h_prev), mul(z, candidate));
}

/// One GRU step on a 1×in input.
inline Var gru_step(Tape& tape, const Parameters& params, const GruCell& cell, Var x, Var h_prev,
                    GruVariant variant = GruVariant::standard) {
  check_step_shapes(tape, x, h_prev, cell.input, cell.hidden);
  auto proj = [&](std::size_t w, std::size_t b) {
    return add_row(matmul(x, tape.param(params, w)), tape.param(params, b));
  };
  return gru_update(tape, params, cell, proj(cell.w_z, cell.b_z), proj(cell.w_r, cell.b_r),
                    proj(cell.w, cell.b), h_prev, variant);
}

struct LstmState {
  Var h;
  Var c;
};

inline LstmState lstm_update(Tape& tape, const Parameters& params, const LstmCell& cell, Var xi,
                             Var xf, Var xo, Var xg, LstmState prev) {
  auto gate = [&](Var xproj, std::size_t u) {
    return add(xproj, matmul(prev.h, tape.param(params, u)));
  };
  Var i = sigmoid(gate(xi, cell.u_i));
  Var f = sigmoid(gate(xf, cell.u_f));
  Var o = sigmoid(gate(xo, cell.u_o));
  Var g = tanh(gate(xg, cell.u_g));
  Var c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

inline LstmState lstm_step(Tape& tape, const Parameters& params, const LstmCell& cell, Var x,
                           LstmState prev) {
  check_step_shapes(tape, x, prev.h, cell.input, cell.hidden);
  auto proj = [&](std::size_t w, std::size_t b) {
    return add_row(matmul(x, tape.param(params, w)), tape.param(params, b));
  };
  return lstm_update(tape, params, cell, proj(cell.w_i, cell.b_i), proj(cell.w_f, cell.b_f),
                     proj(cell.w_o, cell.b_o), proj(cell.w_g, cell.b_g), prev);
}

/// Runs a cell over the rows of X (n×in) from a zero state, last row first
/// when `reverse`. Returns the hidden state per position, in input order.
inline std::vector<Var> run_cell(Tape& tape, const Parameters& params, const Cell& cell, Var X,
                                 bool reverse, GruVariant variant) {
  const std::size_t n = tape.value(X).rows();
  if (n == 0) throw ShapeError("recurrent layer: empty sequence");
  if (tape.value(X).cols() != cell_input(cell)) {
    throw ShapeError("recurrent layer: input width " + std::to_string(tape.value(X).cols()) +
                     " but cell expects " + std::to_string(cell_input(cell)));
  }
  const std::size_t hidden = cell_hidden(cell);
  auto proj = [&](std::size_t w, std::size_t b) {
    return add_row(matmul(X, tape.param(params, w)), tape.param(params, b));
  };
  std::vector<Var> states(n);
  Var zero = tape.constant(Tensor(1, hidden));
  if (const auto* g = std::get_if<GruCell>(&cell)) {
    Var xz = proj(g->w_z, g->b_z), xr = proj(g->w_r, g->b_r), xh = proj(g->w, g->b);
    Var h = zero;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t t = reverse ? n - 1 - k : k;
      h = gru_update(tape, params, *g, row(xz, t), row(xr, t), row(xh, t), h, variant);
      states[t] = h;
    }
  } else {
    const auto& l = std::get<LstmCell>(cell);
    Var xi = proj(l.w_i, l.b_i), xf = proj(l.w_f, l.b_f), xo = proj(l.w_o, l.b_o),
        xg = proj(l.w_g, l.b_g);
    LstmState s{zero, zero};
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t t = reverse ? n - 1 - k : k;
      s = lstm_update(tape, params, l, row(xi, t), row(xf, t), row(xo, t), row(xg, t), s);
      states[t] = s.h;
    }
  }
  return states;
}

/// Uni- or bidirectional recurrent encoder. Output width is h or 2h.
struct RecurrentLayer {
  CellKind kind = CellKind::gru;
  bool bidirectional = true;
  Cell forward;
  Cell backward;
  std::size_t hidden = 0;

  std::size_t output_width() const { return bidirectional ? 2 * hidden : hidden; }
  std::size_t input_width() const { return cell_input(forward); }
};

inline RecurrentLayer make_recurrent_layer(Parameters& params, const std::string& prefix,
                                           CellKind kind, bool bidirectional, std::size_t input,
                                           std::size_t hidden, Rng& rng) {
  RecurrentLayer layer;
  layer.kind = kind;
  layer.bidirectional = bidirectional;
  layer.hidden = hidden;
  layer.forward = make_cell(kind, params, prefix + ".fwd", input, hidden, rng);
  if (bidirectional) layer.backward = make_cell(kind, params, prefix + ".bwd", input, hidden, rng);
  return layer;
}

/// n×in → n×D; row t is [forward state at t ; backward state at t].
inline Var recurrent_forward(Tape& tape, const Parameters& params, const RecurrentLayer& layer,
                             Var X, GruVariant variant = GruVariant::standard) {
  auto fwd = run_cell(tape, params, layer.forward, X, false, variant);
  if (!layer.bidirectional) return concat_rows(fwd);
  auto bwd = run_cell(tape, params, layer.backward, X, true, variant);
  std::vector<Var> rows;
  rows.reserve(fwd.size());
  for (std::size_t t = 0; t < fwd.size(); ++t) rows.push_back(concat_cols({fwd[t], bwd[t]}));
  return concat_rows(rows);
}

/// Two position-wise affine maps D→D (the 1×1 convolutions of the question mask).
struct SelfAttention {
  std::size_t conv1_w = 0, conv1_b = 0, conv2_w = 0, conv2_b = 0;
};

/// Bilinear question-guided attention plus the 2D→D output projection.
struct GuidedAttention {
  std::size_t guide = 0;
  std::size_t out = 0;
};

inline SelfAttention make_self_attention(Parameters& params, const std::string& prefix,
                                         std::size_t width, Rng& rng) {
  SelfAttention a;
  a.conv1_w = add_weight(params, prefix + ".conv1.w", width, width, rng);
  a.conv1_b = add_bias(params, prefix + ".conv1.b", width);
  a.conv2_w = add_weight(params, prefix + ".conv2.w", width, width, rng);
  a.conv2_b = add_bias(params, prefix + ".conv2.b", width);
  return a;
}

inline GuidedAttention make_guided_attention(Parameters& params, const std::string& prefix,
                                             std::size_t width, Rng& rng) {
  GuidedAttention a;
  a.guide = add_weight(params, prefix + ".guide", width, width, rng);
  a.out = add_weight(params, prefix + ".out", 2 * width, width, rng);
  return a;
}

/// Question vector: mask m = ReLU(ReLU(q W1 + b1) W2 + b2), Q = ReLU(mean(q ⊙ m)).
inline Var self_attend_question(Tape& tape, const Parameters& params, const SelfAttention& attn,
                                Var q_tilde) {
  const std::size_t width = tape.value(q_tilde).cols();
  if (params.value(attn.conv1_w).rows() != width) {
    throw ShapeError("self_attend_question: question width " + std::to_string(width) +
                     " does not match mask weights " + params.value(attn.conv1_w).shape_string());
  }
  Var hidden = relu(add_row(matmul(q_tilde, tape.param(params, attn.conv1_w)),
                            tape.param(params, attn.conv1_b)));
  Var mask = relu(add_row(matmul(hidden, tape.param(params, attn.conv2_w)),
                          tape.param(params, attn.conv2_b)));
  return relu(mean_rows(mul(q_tilde, mask)));
}

/// Attention weights softmax_rows(seq W qᵀ), n_s×n_q.
inline Var guided_attention_mask(Tape& tape, const Parameters& params, const GuidedAttention& attn,
                                 Var seq_tilde, Var q_tilde) {
  const Tensor& s = tape.value(seq_tilde);
  const Tensor& q = tape.value(q_tilde);
  if (s.cols() != q.cols()) {
    throw ShapeError("guided_attend: sequence width " + s.shape_string() +
                     " differs from question width " + q.shape_string());
  }
  return softmax_rows(matmul(matmul(seq_tilde, tape.param(params, attn.guide)), transpose(q_tilde)));
}

/// pool(ReLU([mᵀ seq ; q] W_out)) → 1×D.
inline Var guided_attend(Tape& tape, const Parameters& params, const GuidedAttention& attn,
                         Var seq_tilde, Var q_tilde, Pooling pooling = Pooling::max) {
  Var mask = guided_attention_mask(tape, params, attn, seq_tilde, q_tilde);
  Var context = matmul(transpose(mask), seq_tilde);
  Var projected = relu(matmul(concat_cols({context, q_tilde}), tape.param(params, attn.out)));
  return pooling == Pooling::max ? max_pool_rows(projected) : mean_rows(projected);
}

/// History encoding from per-utterance sentence vectors [q1; a1; ...].
/// An empty history yields the zero vector and never touches the layer.
inline Var encode_history(Tape& tape, const Parameters& params, const RecurrentLayer& layer,
                          const GuidedAttention& attn, const std::vector<Var>& sentence_vectors,
                          Var q_tilde, const EncoderOptions& opts = {}) {
  if (sentence_vectors.size() % 2 != 0) {
    throw ValidationError("encode_history: unpaired question/answer in history (" +
                          std::to_string(sentence_vectors.size()) + " sentences)");
  }
  if (sentence_vectors.empty()) return tape.constant(Tensor(1, layer.output_width()));
  Var seq = recurrent_forward(tape, params, layer, concat_rows(sentence_vectors), opts.gru_variant);
  return guided_attend(tape, params, attn, seq, q_tilde, opts.pooling);
}

/// Frame-wise feature stream (flow, rgb or audio) → 1×D.
inline Var encode_features(Tape& tape, const Parameters& params, const RecurrentLayer& layer,
                           const GuidedAttention& attn, Var frames, Var q_tilde,
                           const EncoderOptions& opts = {}) {
  if (tape.value(frames).empty()) throw ShapeError("encode_features: empty frame sequence");
  Var seq = recurrent_forward(tape, params, layer, frames, opts.gru_variant);
  return guided_attend(tape, params, attn, seq, q_tilde, opts.pooling);
}

}  // namespace mmqa
