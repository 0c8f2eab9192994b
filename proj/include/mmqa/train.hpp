#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mmqa/autodiff.hpp"
#include "mmqa/data.hpp"
#include "mmqa/error.hpp"
#include "mmqa/metrics.hpp"
#include "mmqa/model.hpp"
#include "mmqa/optim.hpp"
#include "mmqa/random.hpp"

namespace mmqa {

enum class LossMode { teacher_forcing, scheduled_sampling, free_running };

struct TrainingConfig {
  AdamConfig adam;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  AugmentMode augment = AugmentMode::per_turn;
  std::size_t augment_factor = 1;
  LossMode loss = LossMode::teacher_forcing;
  /// Probability of feeding the model's own prediction under scheduled sampling.
  double sampling_probability = 0.2;
  std::size_t max_answer_length = 20;

  void validate() const {
    if (augment_factor < 1) throw ValidationError("augmentation factor must be >= 1");
    if (patience < 1) throw ValidationError("patience must be >= 1");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (max_epochs < 1) throw ValidationError("max epochs must be >= 1");
    if (max_answer_length < 1) throw ValidationError("max answer length must be >= 1");
    if (!(sampling_probability >= 0.0 && sampling_probability <= 1.0)) {
      throw ValidationError("sampling probability must lie in [0, 1]");
    }
  }
};

/// Vocabulary of every token in first-appearance order (summary, then each turn).
inline Vocabulary build_vocabulary(const std::vector<DialogExample>& examples) {
  Vocabulary vocab;
  auto add_all = [&](const Tokens& tokens) {
    for (const auto& t : tokens) vocab.add(t);
  };
  for (const auto& ex : examples) {
    add_all(ex.summary);
    for (const auto& pair : ex.history) {
      add_all(pair.question);
      add_all(pair.answer);
    }
    add_all(ex.question);
    add_all(ex.answer);
  }
  return vocab;
}

/// Per-example training loss under the configured decoder input policy.
inline Var example_loss(Tape& tape, const Model& m, const EncodedExample& ex, const TrainingConfig& cfg,
                        Rng& rng) {
  const auto enc = encode(tape, m, ex);
  switch (cfg.loss) {
    case LossMode::teacher_forcing:
      return teacher_forced_loss(tape, m, enc.context, enc.question, ex.targets);
    case LossMode::scheduled_sampling:
      return scheduled_sample_loss(tape, m, enc.context, enc.question, ex.targets,
                                   cfg.sampling_probability, rng);
    case LossMode::free_running:
      return scheduled_sample_loss(tape, m, enc.context, enc.question, ex.targets, 1.0, rng);
  }
  throw ValidationError("unknown loss mode");
}

inline std::vector<Tensor> zero_gradients(const Parameters& params) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params.values()) grads.emplace_back(p.rows(), p.cols());
  return grads;
}

/// Mean loss of `batch`, with its gradient averaged into a fresh buffer.
inline double batch_gradients(const Model& m, std::span<const EncodedExample> batch,
                              const TrainingConfig& cfg, Rng& rng, std::vector<Tensor>& grads) {
  grads = zero_gradients(m.params);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    Tape tape;
    Var loss = example_loss(tape, m, ex, cfg, rng);
    const double value = val(loss)[0];
    if (!std::isfinite(value)) throw NumericalError("training loss is not finite");
    tape.backward(loss);
    tape.accumulate_parameter_gradients(grads, inv);
    total += value;
  }
  return total * inv;
}

/// One Adam update on `batch`; returns the batch's mean loss before the update.
inline double train_step(Model& m, AdamState& adam, std::span<const EncodedExample> batch,
                         const TrainingConfig& cfg, Rng& rng) {
  std::vector<Tensor> grads;
  const double loss = batch_gradients(m, batch, cfg, rng, grads);
  adam_step(m.params, grads, adam, cfg.adam);
  for (const Tensor& p : m.params.values()) {
    if (!p.all_finite()) throw NumericalError("parameters diverged (non-finite after update)");
  }
  return loss;
}

inline double mean_token_f1(const Model& m, const std::vector<DialogExample>& examples,
                            std::size_t max_len) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) total += token_f1(generate_answer(m, ex, max_len), ex.answer);
  return total / static_cast<double>(examples.size());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
  bool improved = false;
};

struct TrainResult {
  Model model;  // parameters of the best validation epoch
  AdamState adam;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_f1 = 0.0;
};

/// Called after each epoch with the current (not best) model; returning
/// false ends training early.
using EpochObserver = std::function<bool(const EpochRecord&, const Model&)>;

/// Shuffled mini-batch Adam training with validation-F1 early stopping:
/// stops after `patience` epochs without improvement, at `max_epochs`, or
/// once validation F1 reaches 1.
inline TrainResult train(const std::vector<DialogExample>& train_set,
                         const std::vector<DialogExample>& val_set, Model model,
                         const TrainingConfig& cfg, const EpochObserver& observer = {}) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training split is empty");
  if (val_set.empty()) throw ValidationError("validation split is empty");

  std::vector<EncodedExample> encoded;
  encoded.reserve(train_set.size());
  for (const auto& ex : train_set) encoded.push_back(encode_example(model, ex));
  for (const auto& ex : val_set) encode_example(model, ex);

  Rng rng(cfg.seed);
  AdamState adam = AdamState::zeros_like(model.params);
  TrainResult result{model, adam, {}, 0, -1.0};
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<EncodedExample> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(encoded[order[i]]);
      }
      loss_sum += train_step(model, adam, batch, cfg, rng);
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val_f1 = mean_token_f1(model, val_set, cfg.max_answer_length);
    rec.improved = rec.val_f1 > result.best_f1;
    if (rec.improved) {
      result.model = model;
      result.adam = adam;
      result.best_epoch = epoch;
      result.best_f1 = rec.val_f1;
      stale = 0;
    } else {
      ++stale;
    }
    result.log.push_back(rec);
    if (observer && !observer(rec, model)) break;
    if (stale >= cfg.patience || result.best_f1 >= 1.0) break;
  }
  return result;
}

struct Evaluation {
  ScoreTable scores;
  std::vector<Tokens> generations;
};

/// Greedy generation per example scored against its gold answer.
inline Evaluation evaluate(const Model& m, const std::vector<DialogExample>& test_set,
                           std::size_t max_len) {
  if (m.params.value(m.embedding).rows() != m.vocab.size()) {
    throw ValidationError("vocabulary mismatch: embedding has " +
                          std::to_string(m.params.value(m.embedding).rows()) + " rows for " +
                          std::to_string(m.vocab.size()) + " tokens");
  }
  Evaluation out;
  ScoredCorpus corpus;
  for (const auto& ex : test_set) {
    out.generations.push_back(generate_answer(m, ex, max_len));
    corpus.candidates.push_back(out.generations.back());
    corpus.references.push_back({ex.answer});
  }
  out.scores = score_corpus(corpus);
  return out;
}

inline std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::teacher_forcing: return "teacher-forcing";
    case LossMode::scheduled_sampling: return "scheduled-sampling";
    case LossMode::free_running: return "free-running";
  }
  return "teacher-forcing";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "teacher-forcing") return LossMode::teacher_forcing;
  if (s == "scheduled-sampling") return LossMode::scheduled_sampling;
  if (s == "free-running") return LossMode::free_running;
  throw ValidationError("unknown loss mode '" + s + "'");
}

}  // namespace mmqa
