#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mmqa/autodiff.hpp"
#include "mmqa/data.hpp"
#include "mmqa/encoders.hpp"
#include "mmqa/error.hpp"
#include "mmqa/random.hpp"
#include "mmqa/text.hpp"

namespace mmqa {

struct ModelConfig {
  std::size_t embedding_width = 64;
  /// Per-direction encoder width h; the encoder output width is D = 2h.
  std::size_t hidden = 32;
  /// Decoder width; 0 means D.
  std::size_t decoder_hidden = 0;
  CellKind cell = CellKind::gru;
  Pooling pooling = Pooling::max;
  GruVariant gru_variant = GruVariant::standard;
  bool use_video = true;
  std::size_t flow_width = 0;
  std::size_t rgb_width = 0;
  std::size_t audio_width = 0;
  bool freeze_embeddings = false;
  std::uint64_t init_seed = 1;

  std::size_t encoder_width() const { return 2 * hidden; }
  std::size_t decoder_width() const { return decoder_hidden == 0 ? encoder_width() : decoder_hidden; }
  std::size_t context_width() const { return 5 * encoder_width(); }
  EncoderOptions encoder_options() const { return {gru_variant, pooling}; }
};

/// Two stacked unidirectional GRU layers and a vocabulary projection.
struct Decoder {
  GruCell layer1;
  GruCell layer2;
  std::size_t proj_w = 0;
  std::size_t proj_b = 0;
  std::size_t hidden = 0;
};

/// The full encoder-decoder and its parameter layout.
struct Model {
  ModelConfig config;
  Vocabulary vocab;
  Parameters params;

  std::size_t embedding = 0;
  RecurrentLayer question_rnn;
  RecurrentLayer summary_rnn;  // also encodes each history utterance
  RecurrentLayer history_rnn;
  std::optional<RecurrentLayer> flow_rnn, rgb_rnn, audio_rnn;
  SelfAttention question_attn;
  GuidedAttention summary_attn;
  GuidedAttention history_attn;
  GuidedAttention flow_attn, rgb_attn, audio_attn;
  Decoder decoder;

  std::size_t width() const { return config.encoder_width(); }
};

/// Allocates every parameter in a fixed order from `config.init_seed`.
inline Model make_model(const ModelConfig& config, Vocabulary vocab) {
  if (config.embedding_width == 0 || config.hidden == 0) {
    throw ValidationError("model widths must be positive");
  }
  Model m;
  m.config = config;
  m.vocab = std::move(vocab);
  Rng rng(config.init_seed);
  const std::size_t d = config.encoder_width();
  const std::size_t dw = config.embedding_width;
  const std::size_t h = config.hidden;
  if (config.decoder_width() < d) {
    throw ValidationError("decoder width " + std::to_string(config.decoder_width()) +
                          " is smaller than the question width " + std::to_string(d));
  }

  m.embedding = m.params.add("embedding", init_embedding_table(m.vocab.size(), dw, rng));
  m.params.set_trainable(m.embedding, !config.freeze_embeddings);

  m.question_rnn = make_recurrent_layer(m.params, "question.rnn", config.cell, true, dw, h, rng);
  m.question_attn = make_self_attention(m.params, "question.mask", d, rng);
  m.summary_rnn = make_recurrent_layer(m.params, "summary.rnn", config.cell, true, dw, h, rng);
  m.summary_attn = make_guided_attention(m.params, "summary.attn", d, rng);
  m.history_rnn = make_recurrent_layer(m.params, "history.rnn", config.cell, true, d, h, rng);
  m.history_attn = make_guided_attention(m.params, "history.attn", d, rng);
  if (config.use_video) {
    if (config.flow_width == 0 || config.rgb_width == 0 || config.audio_width == 0) {
      throw ValidationError("video model needs positive flow/rgb/audio feature widths");
    }
    m.flow_rnn = make_recurrent_layer(m.params, "flow.rnn", config.cell, true, config.flow_width, h, rng);
    m.flow_attn = make_guided_attention(m.params, "flow.attn", d, rng);
    m.rgb_rnn = make_recurrent_layer(m.params, "rgb.rnn", config.cell, true, config.rgb_width, h, rng);
    m.rgb_attn = make_guided_attention(m.params, "rgb.attn", d, rng);
    m.audio_rnn = make_recurrent_layer(m.params, "audio.rnn", config.cell, true, config.audio_width, h, rng);
    m.audio_attn = make_guided_attention(m.params, "audio.attn", d, rng);
  }

  const std::size_t hd = config.decoder_width();
  m.decoder.hidden = hd;
  m.decoder.layer1 = make_gru_cell(m.params, "decoder.l1", config.context_width() + dw, hd, rng);
  m.decoder.layer2 = make_gru_cell(m.params, "decoder.l2", hd, hd, rng);
  m.decoder.proj_w = add_weight(m.params, "decoder.proj.w", hd, m.vocab.size(), rng);
  m.decoder.proj_b = add_bias(m.params, "decoder.proj.b", m.vocab.size());
  return m;
}

/// Token ids of one example, resolved once against the model vocabulary.
struct EncodedExample {
  std::vector<std::size_t> question;
  std::vector<std::size_t> summary;
  std::vector<std::vector<std::size_t>> history;  // q1, a1, q2, a2, ...
  std::vector<std::size_t> targets;               // answer ids + EOS
  VideoFeatures features;
};

inline std::vector<std::size_t> resolve_all(const Vocabulary& vocab, const Tokens& tokens,
                                            const char* what) {
  if (tokens.empty()) throw ValidationError(std::string("empty ") + what);
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.resolve(t));
  return ids;
}

inline std::vector<std::size_t> answer_targets(const Vocabulary& vocab, const Tokens& answer) {
  std::vector<std::size_t> ids;
  ids.reserve(answer.size() + 1);
  for (const auto& t : answer) ids.push_back(vocab.target_id(t));
  ids.push_back(Vocabulary::eos_id);
  return ids;
}

inline void check_feature(const std::optional<Tensor>& f, std::size_t width, const char* name,
                          const std::string& video_id) {
  if (!f) throw ValidationError("example '" + video_id + "' lacks " + name + " features");
  if (f->cols() != width) {
    throw ValidationError("example '" + video_id + "': " + name + " features have width " +
                          std::to_string(f->cols()) + ", model expects " + std::to_string(width));
  }
}

inline EncodedExample encode_example(const Model& m, const DialogExample& ex) {
  EncodedExample e;
  e.question = resolve_all(m.vocab, ex.question, "question");
  e.summary = resolve_all(m.vocab, ex.summary, "summary");
  for (const auto& pair : ex.history) {
    e.history.push_back(resolve_all(m.vocab, pair.question, "history question"));
    e.history.push_back(resolve_all(m.vocab, pair.answer, "history answer"));
  }
  e.targets = answer_targets(m.vocab, ex.answer);
  if (m.config.use_video) {
    check_feature(ex.features.flow, m.config.flow_width, "flow", ex.video_id);
    check_feature(ex.features.rgb, m.config.rgb_width, "rgb", ex.video_id);
    check_feature(ex.features.audio, m.config.audio_width, "audio", ex.video_id);
    e.features = ex.features;
  }
  return e;
}

inline Var embed_ids(Tape& tape, const Model& m, std::vector<std::size_t> ids) {
  return gather_rows(tape.param(m.params, m.embedding), std::move(ids));
}

/// [O; R; A; S; D] in that fixed order.
inline Var fuse(Var flow, Var rgb, Var audio, Var summary, Var history) {
  const std::size_t w = val(flow).cols();
  for (Var v : {flow, rgb, audio, summary, history}) {
    if (val(v).rows() != 1 || val(v).cols() != w) {
      throw ShapeError("fuse: modality vector " + val(v).shape_string() + " but expected [1x" +
                       std::to_string(w) + "]");
    }
  }
  return concat_cols({flow, rgb, audio, summary, history});
}

struct Encoding {
  Var question;  // Q, 1×D
  Var context;   // C, 1×5D
};

inline Encoding encode(Tape& tape, const Model& m, const EncodedExample& ex) {
  const auto opts = m.config.encoder_options();
  Var q_tilde = recurrent_forward(tape, m.params, m.question_rnn, embed_ids(tape, m, ex.question),
                                  opts.gru_variant);
  Var question = self_attend_question(tape, m.params, m.question_attn, q_tilde);

  auto sentence = [&](const std::vector<std::size_t>& ids) {
    Var seq = recurrent_forward(tape, m.params, m.summary_rnn, embed_ids(tape, m, ids), opts.gru_variant);
    return guided_attend(tape, m.params, m.summary_attn, seq, q_tilde, opts.pooling);
  };
  Var summary = sentence(ex.summary);
  std::vector<Var> utterances;
  utterances.reserve(ex.history.size());
  for (const auto& ids : ex.history) utterances.push_back(sentence(ids));
  Var history = encode_history(tape, m.params, m.history_rnn, m.history_attn, utterances, q_tilde, opts);

  Var flow, rgb, audio;
  if (m.config.use_video) {
    auto stream = [&](const RecurrentLayer& layer, const GuidedAttention& attn, const Tensor& frames) {
      return encode_features(tape, m.params, layer, attn, tape.constant(frames), q_tilde, opts);
    };
    flow = stream(*m.flow_rnn, m.flow_attn, *ex.features.flow);
    rgb = stream(*m.rgb_rnn, m.rgb_attn, *ex.features.rgb);
    audio = stream(*m.audio_rnn, m.audio_attn, *ex.features.audio);
  } else {
    flow = rgb = audio = tape.constant(Tensor(1, m.width()));
  }
  return {question, fuse(flow, rgb, audio, summary, history)};
}

struct DecoderState {
  std::vector<Var> hidden;  // one 1×h_dec state per layer
  bool initialized() const { return hidden.size() == 2; }
};

/// Layer 1 starts from Q zero-padded to h_dec; layer 2 from zeros.
inline DecoderState init_decoder(Tape& tape, const Model& m, Var question) {
  const std::size_t hd = m.decoder.hidden;
  const std::size_t q = val(question).cols();
  if (hd < q) {
    throw ValidationError("init_decoder: decoder width " + std::to_string(hd) +
                          " smaller than question width " + std::to_string(q));
  }
  Var first = question;
  if (hd > q) first = concat_cols({question, tape.constant(Tensor(1, hd - q))});
  return DecoderState{{first, tape.constant(Tensor(1, hd))}};
}

struct StepOutput {
  Var logits;  // 1×|V|
  DecoderState state;
};

inline StepOutput decode_step(Tape& tape, const Model& m, const DecoderState& state, Var context,
                              Var prev_word) {
  if (!state.initialized()) throw ValidationError("decode_step: decoder state not initialized");
  const auto variant = m.config.gru_variant;
  Var input = concat_cols({context, prev_word});
  Var h1 = gru_step(tape, m.params, m.decoder.layer1, input, state.hidden[0], variant);
  Var h2 = gru_step(tape, m.params, m.decoder.layer2, h1, state.hidden[1], variant);
  Var logits = add_row(matmul(h2, tape.param(m.params, m.decoder.proj_w)),
                       tape.param(m.params, m.decoder.proj_b));
  return {logits, DecoderState{{h1, h2}}};
}

/// Argmax over a 1×|V| row with PAD and SOS excluded; lower id wins ties.
inline std::size_t greedy_token(const Tensor& logits) {
  std::size_t best = Vocabulary::eos_id;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < logits.cols(); ++id) {
    if (id == Vocabulary::pad_id || id == Vocabulary::sos_id) continue;
    if (logits(0, id) > best_value) {
      best = id;
      best_value = logits(0, id);
    }
  }
  return best;
}

/// Greedy decoding from SOS; EOS ends the answer and is not returned.
inline std::vector<std::size_t> generate(Tape& tape, const Model& m, Var context, Var question,
                                         std::size_t max_len) {
  if (max_len == 0) throw ValidationError("generate: max_len must be >= 1");
  DecoderState state = init_decoder(tape, m, question);
  std::size_t prev = Vocabulary::sos_id;
  std::vector<std::size_t> out;
  for (std::size_t step = 0; step < max_len; ++step) {
    auto [logits, next] = decode_step(tape, m, state, context, embed_ids(tape, m, {prev}));
    state = std::move(next);
    const std::size_t token = greedy_token(val(logits));
    if (token == Vocabulary::eos_id) break;
    out.push_back(token);
    prev = token;
  }
  return out;
}

inline std::vector<std::size_t> normalized_gold(std::span<const std::size_t> gold) {
  if (gold.empty()) throw ValidationError("empty gold answer");
  std::vector<std::size_t> targets(gold.begin(), gold.end());
  if (targets.back() != Vocabulary::eos_id) targets.push_back(Vocabulary::eos_id);
  return targets;
}

/// Cross entropy of [y1..yT, EOS] where the word fed at step t is chosen by
/// `pick(t, previous_logits)`; step 0 always consumes SOS.
template <typename Pick>
Var decoder_loss(Tape& tape, const Model& m, Var context, Var question,
                 const std::vector<std::size_t>& targets, Pick&& pick) {
  DecoderState state = init_decoder(tape, m, question);
  std::vector<Var> logits;
  logits.reserve(targets.size());
  std::size_t prev = Vocabulary::sos_id;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (t > 0) prev = pick(t, val(logits.back()));
    auto [step_logits, next] = decode_step(tape, m, state, context, embed_ids(tape, m, {prev}));
    state = std::move(next);
    logits.push_back(step_logits);
  }
  return cross_entropy(concat_rows(logits), targets);
}

/// Decoder input at step t is always the gold word y_{t-1}.
inline Var teacher_forced_loss(Tape& tape, const Model& m, Var context, Var question,
                               std::span<const std::size_t> gold) {
  const auto targets = normalized_gold(gold);
  return decoder_loss(tape, m, context, question, targets,
                      [&](std::size_t t, const Tensor&) { return targets[t - 1]; });
}

/// With probability p_model the previous step's greedy prediction replaces
/// the gold word. p_model = 1 is free-running decoding.
inline Var scheduled_sample_loss(Tape& tape, const Model& m, Var context, Var question,
                                 std::span<const std::size_t> gold, double p_model, Rng& rng) {
  if (!(p_model >= 0.0 && p_model <= 1.0)) {
    throw ValidationError("scheduled sampling probability must lie in [0, 1]");
  }
  const auto targets = normalized_gold(gold);
  return decoder_loss(tape, m, context, question, targets, [&](std::size_t t, const Tensor& prev_logits) {
    return rng.bernoulli(p_model) ? greedy_token(prev_logits) : targets[t - 1];
  });
}

/// Greedy answer tokens for one example (no gradient recording).
inline Tokens generate_answer(const Model& m, const DialogExample& ex, std::size_t max_len) {
  Tape tape(Tape::Mode::forward_only);
  const auto enc = encode(tape, m, encode_example(m, ex));
  Tokens out;
  for (std::size_t id : generate(tape, m, enc.context, enc.question, max_len)) {
    out.push_back(m.vocab.token(id));
  }
  return out;
}

}  // namespace mmqa
