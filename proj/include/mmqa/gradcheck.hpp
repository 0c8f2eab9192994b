#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "mmqa/autodiff.hpp"
#include "mmqa/encoders.hpp"
#include "mmqa/model.hpp"
#include "mmqa/random.hpp"
#include "mmqa/synthetic.hpp"
#include "mmqa/train.hpp"

namespace mmqa {

struct GradCheckCase {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return error < tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double seconds = 0.0;
  bool passed() const {
    for (const auto& c : cases)
      if (!c.passed()) return false;
    return !cases.empty();
  }
};

inline constexpr double gradcheck_eps = 1e-5;
inline constexpr double gradcheck_tolerance = 1e-4;

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

/// Values bounded away from zero so ReLU kinks stay outside ±eps.
inline Tensor off_kink_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = random_tensor(rows, cols, rng);
  for (double& v : t.data()) v = v < 0 ? v - 0.1 : v + 0.1;
  return t;
}

/// Small end-to-end model: all five encoders, fusion and the 2-layer decoder at D = 8.
struct GradCheckFixture {
  Model model;
  EncodedExample example;
};

inline GradCheckFixture make_gradcheck_fixture(CellKind cell = CellKind::gru, Pooling pooling = Pooling::max,
                                               std::uint64_t seed = 11) {
  SyntheticSpec spec;
  spec.dialogs = 2;
  spec.turns = 2;
  spec.frames = 3;
  spec.flow_width = 3;
  spec.rgb_width = 2;
  spec.audio_width = 2;
  spec.seed = seed;
  auto dialogs = make_synthetic_dialogs(spec);
  // Keep every sequence at 4 tokens or fewer.
  auto clip = [](Tokens t) {
    if (t.size() > 4) t.resize(4);
    return t;
  };
  DialogExample ex = expand_basic(dialogs[0]).front();
  ex.question = clip(ex.question);
  ex.summary = clip(ex.summary);
  ex.answer = Tokens(ex.answer.begin(), ex.answer.begin() + 2);
  for (auto& pair : ex.history) {
    pair.question = clip(pair.question);
    pair.answer = clip(pair.answer);
  }
  ModelConfig cfg;
  cfg.embedding_width = 4;
  cfg.hidden = 4;
  cfg.cell = cell;
  cfg.pooling = pooling;
  cfg.flow_width = spec.flow_width;
  cfg.rgb_width = spec.rgb_width;
  cfg.audio_width = spec.audio_width;
  cfg.init_seed = seed;
  Model m = make_model(cfg, build_vocabulary({ex}));
  // Spread the weights so that activations are not all near zero.
  Rng rng(seed + 1);
  for (Tensor& p : m.params.values())
    for (double& v : p.data()) v += rng.uniform(-0.2, 0.2);
  EncodedExample enc = encode_example(m, ex);
  return {std::move(m), std::move(enc)};
}

inline double model_gradcheck(GradCheckFixture& fx) {
  return grad_check_parameters(
      [&](Tape& tape) {
        const auto e = encode(tape, fx.model, fx.example);
        return teacher_forced_loss(tape, fx.model, e.context, e.question, fx.example.targets);
      },
      fx.model.params, gradcheck_eps);
}

/// Finite-difference checks of every differentiable primitive, each encoder
/// and the composed model loss.
inline GradCheckReport run_gradcheck_suite(std::uint64_t seed = 3) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report;
  Rng rng(seed);
  auto add_case = [&](std::string name, double err) {
    report.cases.push_back({std::move(name), err, gradcheck_tolerance});
  };
  auto unary = [&](std::string name, std::size_t r, std::size_t c, auto&& op, bool off_kink = false) {
    Tensor x = off_kink ? off_kink_tensor(r, c, rng) : random_tensor(r, c, rng);
    const std::uint64_t weight_seed = rng.next_u64();
    // Random output weights make every output coordinate matter differently.
    add_case(std::move(name), grad_check(
                                  [&](Tape& t, Var v) {
                                    Var out = op(v);
                                    Rng wr(weight_seed);
                                    const Tensor& ov = t.value(out);
                                    return sum(mul(out, t.constant(random_tensor(ov.rows(), ov.cols(), wr))));
                                  },
                                  x, gradcheck_eps));
  };

  const Tensor b34 = random_tensor(3, 4, rng);
  const Tensor b23 = random_tensor(2, 3, rng);
  unary("matmul/left", 2, 3, [&](Var v) { return matmul(v, v.tape->constant(b34)); });
  unary("matmul/right", 3, 4, [&](Var v) { return matmul(v.tape->constant(b23), v); });
  unary("add", 2, 3, [&](Var v) { return add(v, v.tape->constant(b23)); });
  unary("add_row/bias", 1, 3, [&](Var v) { return add_row(v.tape->constant(b23), v); });
  unary("mul", 2, 3, [&](Var v) { return mul(v, v); });
  unary("scale", 2, 3, [&](Var v) { return scale(v, -1.7); });
  unary("one_minus", 2, 3, [&](Var v) { return one_minus(v); });
  unary("relu", 3, 3, [&](Var v) { return relu(v); }, true);
  unary("sigmoid", 3, 3, [&](Var v) { return sigmoid(v); });
  unary("tanh", 3, 3, [&](Var v) { return tanh(v); });
  unary("transpose", 2, 3, [&](Var v) { return transpose(v); });
  unary("concat_cols", 2, 3, [&](Var v) { return concat_cols({v, mul(v, v), v}); });
  unary("concat_rows", 2, 3, [&](Var v) { return concat_rows({mul(v, v), v}); });
  unary("row", 3, 2, [&](Var v) { return concat_rows({row(v, 2), row(v, 0), row(v, 2)}); });
  unary("gather_rows", 4, 3, [&](Var v) { return gather_rows(v, {3, 1, 3, 0}); });
  unary("softmax_rows", 3, 4, [&](Var v) { return softmax_rows(v); });
  unary("mean_rows", 4, 3, [&](Var v) { return mean_rows(v); });
  unary("max_pool_rows", 4, 3, [&](Var v) { return max_pool_rows(v); });
  {
    Tensor x = random_tensor(3, 5, rng, 2.0);
    add_case("cross_entropy", grad_check([](Tape&, Var v) { return cross_entropy(v, {4, 0, 2}); }, x,
                                         gradcheck_eps));
  }

  // Recurrent cells and attention blocks with randomized parameters.
  {
    Parameters params;
    Rng init(seed + 100);
    GruCell gru = make_gru_cell(params, "gru", 3, 4, init);
    LstmCell lstm = make_lstm_cell(params, "lstm", 3, 4, init);
    RecurrentLayer bi = make_recurrent_layer(params, "bi", CellKind::gru, true, 3, 2, init);
    RecurrentLayer bil = make_recurrent_layer(params, "bil", CellKind::lstm, true, 3, 2, init);
    SelfAttention self = make_self_attention(params, "self", 4, init);
    GuidedAttention guided = make_guided_attention(params, "guided", 4, init);
    RecurrentLayer hist = make_recurrent_layer(params, "hist", CellKind::gru, true, 4, 2, init);
    for (Tensor& p : params.values())
      for (double& v : p.data()) v += init.uniform(-0.3, 0.3);
    const Tensor x = random_tensor(1, 3, rng);
    const Tensor h = random_tensor(1, 4, rng);
    const Tensor seq = random_tensor(3, 3, rng);
    const Tensor q = random_tensor(2, 4, rng);
    const Tensor s = random_tensor(3, 4, rng);
    const Tensor sentences = random_tensor(4, 4, rng);

    auto check = [&](std::string name, auto&& f) { add_case(std::move(name), grad_check_parameters(f, params, gradcheck_eps)); };
    check("gru_step", [&](Tape& t) { return sum(gru_step(t, params, gru, t.constant(x), t.constant(h))); });
    check("gru_step/literal", [&](Tape& t) {
      return sum(gru_step(t, params, gru, t.constant(x), t.constant(h), GruVariant::literal));
    });
    check("lstm_step", [&](Tape& t) {
      auto st = lstm_step(t, params, lstm, t.constant(x), {t.constant(h), t.constant(h)});
      return sum(add(st.h, st.c));
    });
    check("bigru", [&](Tape& t) { return sum(mul(recurrent_forward(t, params, bi, t.constant(seq)), t.constant(b34))); });
    check("bilstm", [&](Tape& t) { return sum(mul(recurrent_forward(t, params, bil, t.constant(seq)), t.constant(b34))); });
    check("self_attend_question", [&](Tape& t) { return sum(self_attend_question(t, params, self, t.constant(q))); });
    check("guided_attend/max", [&](Tape& t) {
      return sum(guided_attend(t, params, guided, t.constant(s), t.constant(q), Pooling::max));
    });
    check("guided_attend/average", [&](Tape& t) {
      return sum(guided_attend(t, params, guided, t.constant(s), t.constant(q), Pooling::average));
    });
    check("encode_history", [&](Tape& t) {
      std::vector<Var> sv;
      for (std::size_t i = 0; i < 4; ++i) sv.push_back(row(t.constant(sentences), i));
      return sum(encode_history(t, params, hist, guided, sv, t.constant(q)));
    });
    check("encode_features", [&](Tape& t) {
      return sum(encode_features(t, params, bi, guided, t.constant(seq), t.constant(q)));
    });
    // Inputs as well as parameters: gradient w.r.t. the question encoding.
    add_case("guided_attend/question", grad_check([&](Tape& t, Var qv) {
               return sum(guided_attend(t, params, guided, t.constant(s), qv));
             }, q, gradcheck_eps));
  }

  {
    auto fx = make_gradcheck_fixture(CellKind::gru, Pooling::max, seed + 200);
    add_case("model/teacher_forced_loss", model_gradcheck(fx));
  }
  {
    auto fx = make_gradcheck_fixture(CellKind::lstm, Pooling::average, seed + 300);
    add_case("model/teacher_forced_loss[lstm,average]", model_gradcheck(fx));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace mmqa
