#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "mmqa/data.hpp"
#include "mmqa/error.hpp"
#include "mmqa/io.hpp"
#include "mmqa/metrics.hpp"
#include "mmqa/model.hpp"
#include "mmqa/train.hpp"

namespace mmqa {

namespace fs = std::filesystem;

inline void run_augment(const fs::path& in, const fs::path& out, AugmentMode mode, std::size_t factor,
                        std::uint64_t seed) {
  if (factor < 1) throw ValidationError("augmentation factor must be >= 1");
  save_dataset(out, augment_dataset(load_dataset(in), mode, factor, seed));
}

/// Feature widths left at 0 in the config are taken from the first record
/// carrying that stream.
inline void infer_feature_widths(ModelConfig& cfg, const std::vector<DialogExample>& examples) {
  if (!cfg.use_video) return;
  auto fill = [](std::size_t& width, const std::optional<Tensor>& f) {
    if (width == 0 && f) width = f->cols();
  };
  for (const auto& ex : examples) {
    fill(cfg.flow_width, ex.features.flow);
    fill(cfg.rgb_width, ex.features.rgb);
    fill(cfg.audio_width, ex.features.audio);
  }
  if (cfg.flow_width == 0 || cfg.rgb_width == 0 || cfg.audio_width == 0) {
    throw ValidationError("video+text model needs flow, rgb and audio features; use \"modalities\": \"text-only\"");
  }
}

inline std::string format_epoch_log(const std::vector<EpochRecord>& log) {
  std::string out = "epoch train_loss val_f1 improved\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + " " + format_double(r.train_loss) + " " + format_double(r.val_f1) + " " +
           (r.improved ? "1" : "0") + "\n";
  }
  return out;
}

struct TrainSummary {
  std::size_t train_examples = 0;
  std::size_t vocabulary = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_f1 = 0.0;
};

/// Trains from a run config; writes the checkpoint to `out` and the epoch
/// log next to it as `<out>.log`.
inline TrainSummary run_train(const RunConfig& cfg, const fs::path& out) {
  if (cfg.train_data.empty()) throw ValidationError("config: data.train is required");
  if (cfg.val_data.empty()) throw ValidationError("config: data.val is required");
  const Dataset train_ds = load_dataset(cfg.train_data);
  const Dataset val_ds = load_dataset(cfg.val_data);
  const auto& t = cfg.training;
  t.validate();
  const auto train_set = train_ds.examples(t.augment, t.augment_factor, t.seed);
  const auto val_set = val_ds.examples(AugmentMode::per_turn, 1, t.seed);

  ModelConfig mc = cfg.model;
  infer_feature_widths(mc, train_set);
  Model model = make_model(mc, build_vocabulary(train_set));
  TrainResult result = train(train_set, val_set, std::move(model), t);

  save_checkpoint(out, make_checkpoint(result.model, result.adam, t));
  fs::path log_path = out;
  log_path += ".log";
  write_file_atomic(log_path, format_epoch_log(result.log));
  return {train_set.size(), result.model.vocab.size(), result.log.size(), result.best_epoch, result.best_f1};
}

/// Examples to score: one per turn, every turn answered from its own prefix.
inline std::vector<DialogExample> evaluation_examples(const Dataset& ds) {
  return ds.examples(AugmentMode::per_turn, 1, 0);
}

inline Evaluation run_eval(const fs::path& ckpt, const fs::path& data, const fs::path& out,
                           std::ostream* warnings = nullptr) {
  const RestoredCheckpoint rc = restore_checkpoint(load_checkpoint(ckpt));
  const auto examples = evaluation_examples(load_dataset(data));
  if (examples.empty()) throw ValidationError(data.string() + ": no examples to score");
  Evaluation ev = evaluate(rc.model, examples, rc.training.max_answer_length);
  if (warnings && examples.size() <= 1) {
    *warnings << "warning: CIDEr is 0 on a single-example corpus (every IDF weight is log 1)\n";
  }
  write_file_atomic(out, format_scores(ev.scores));
  return ev;
}

inline std::vector<Tokens> run_generate(const fs::path& ckpt, const fs::path& data, const fs::path& out) {
  const RestoredCheckpoint rc = restore_checkpoint(load_checkpoint(ckpt));
  std::vector<Tokens> gens;
  for (const auto& ex : evaluation_examples(load_dataset(data))) {
    gens.push_back(generate_answer(rc.model, ex, rc.training.max_answer_length));
  }
  write_file_atomic(out, format_generations(gens));
  return gens;
}

}  // namespace mmqa
