// Acceptance checks: one PASS/FAIL line per criterion.
//   mmqa_acceptance            run every criterion
//   mmqa_acceptance --only 4   run one criterion

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metric_oracle.hpp"
#include "mmqa/mmqa.hpp"
#include "test_support.hpp"

using namespace mmqa;
using testing_support::TempDir;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const GradCheckReport report = run_gradcheck_suite();
  double worst = 0.0;
  std::string worst_name;
  bool has_model = false;
  for (const auto& c : report.cases) {
    if (c.error >= worst) {
      worst = c.error;
      worst_name = c.name;
    }
    has_model = has_model || c.name.rfind("model/", 0) == 0;
  }
  const bool ok = report.passed() && has_model && worst < 1e-4 && report.seconds < 60.0;
  return {ok, fmt("%zu cases, max relative error %.3g (%s) < 1e-4, %.1f s < 60 s", report.cases.size(), worst,
                  worst_name.c_str(), report.seconds)};
}

// ---------------------------------------------------------------------------

Outcome metric_equivalence() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    const oracle::Corpus c = oracle::random_corpus(rng);
    const ScoredCorpus sc{c.candidates, c.references};
    for (std::size_t n = 1; n <= 4; ++n) worst = std::max(worst, std::abs(bleu(sc, n) - oracle::bleu(c, n)));
    worst = std::max(worst, std::abs(rouge_l(sc) - oracle::rouge_l(c)));
    worst = std::max(worst, std::abs(cider(sc) - oracle::cider(c)));
  }

  std::vector<std::string> failed;
  auto hand = [&](const char* name, double got, double want) {
    if (std::abs(got - want) > 1e-12) failed.push_back(fmt("%s=%.17g want %.17g", name, got, want));
  };
  const ScoredCorpus clipped{{tokenize("the the the the")}, {{tokenize("the cat")}}};
  // c = 4 >= r = 2, so no brevity penalty applies: clipped precision 1/4 only.
  hand("bleu1(the the the the | the cat)", bleu(clipped, 1), 0.25);
  const ScoredCorpus same{{tokenize("a man sits on a red chair")}, {{tokenize("a man sits on a red chair")}}};
  for (std::size_t n = 1; n <= 4; ++n) hand("bleu(identical)", bleu(same, n), 1.0);
  hand("bleu1(empty)", bleu(ScoredCorpus{{{}}, {{tokenize("a b")}}}, 1), 0.0);
  hand("rouge_l(a c | a b c)", rouge_l(tokenize("a c"), std::vector<Tokens>{tokenize("a b c")}), 11.0 / 14.0);
  hand("rouge_l(disjoint)", rouge_l(tokenize("x y"), std::vector<Tokens>{tokenize("a b")}), 0.0);
  const ScoredCorpus two{{tokenize("a man walks home"), tokenize("the dog sleeps now")},
                         {{tokenize("a man walks home")}, {tokenize("the dog sleeps now")}}};
  hand("cider(two perfect examples)", cider(two), 10.0);
  const ScoredCorpus disjoint{{tokenize("x y z"), tokenize("p q r")},
                              {{tokenize("a man walks")}, {tokenize("the dog sleeps")}}};
  hand("cider(disjoint)", cider(disjoint), 0.0);
  const ScoredCorpus once{{tokenize("a dog walks")}, {{tokenize("a man walks")}}};
  hand("cider(single example)", cider(once), 0.0);
  const ScoredCorpus base{{tokenize("a b"), tokenize("c d")}, {{tokenize("a b c")}, {tokenize("c d e")}}};
  const ScoredCorpus doubled{{tokenize("a b a b"), tokenize("c d c d")}, {{tokenize("a b c")}, {tokenize("c d e")}}};
  hand("cider1(doubled counts)", cider_n(doubled, 1), cider_n(base, 1));

  std::string detail = fmt("25 random corpora, max |impl - oracle| = %.3g <= 1e-9; %s", worst,
                           failed.empty() ? "hand cases exact (bleu1 0.25, rouge_l 11/14, cider 10)" : "");
  for (const auto& f : failed) detail += f + "; ";
  return {worst <= 1e-9 && failed.empty(), detail};
}

// ---------------------------------------------------------------------------

bool pair_preserving(const std::vector<QaPair>& history, const Dialog& d) {
  if (history.size() > d.turns.size()) return false;
  std::vector<bool> used(history.size(), false);
  for (const auto& pair : history) {
    bool found = false;
    for (std::size_t i = 0; i < history.size() && !found; ++i) {
      if (!used[i] && d.turns[i] == pair) {
        used[i] = true;
        found = true;
      }
    }
    if (!found) return false;
  }
  return true;
}

Outcome augmentation_counting() {
  Dialog d;
  d.video_id = "ten";
  d.summary = tokenize("a long dialog .");
  for (int i = 1; i <= 10; ++i) {
    d.turns.push_back({tokenize("question " + std::to_string(i) + " ?"), tokenize("answer " + std::to_string(i))});
  }
  const auto per_turn = expand_per_turn(d);
  auto with_long_history = [](const std::vector<DialogExample>& xs) {
    std::size_t n = 0;
    for (const auto& x : xs) n += x.history.size() >= 2;
    return n;
  };
  const auto shuffled = expand_shuffle(d, 2, 17);
  const std::uint64_t capacity = permutation_capacity(9);

  std::size_t checked = 0;
  bool all_preserving = true;
  for (std::size_t f : {2u, 5u, 30u}) {
    for (const auto& ex : expand_shuffle(d, f, 40 + f)) {
      all_preserving = all_preserving && pair_preserving(ex.history, d);
      ++checked;
    }
  }
  const bool ok = per_turn.size() == 10 && with_long_history(shuffled) == 2 * with_long_history(per_turn) &&
                  capacity == 362879 && all_preserving;
  return {ok, fmt("per-turn %zu examples; history>=2: %zu -> %zu with f=2; capacity(9) = %llu; %zu shuffled "
                  "histories %s pair-preserving permutations",
                  per_turn.size(), with_long_history(per_turn), with_long_history(shuffled),
                  static_cast<unsigned long long>(capacity), checked, all_preserving ? "all" : "NOT all")};
}

// ---------------------------------------------------------------------------

struct ToyCorpus {
  std::vector<DialogExample> train;
  std::vector<DialogExample> held_out;
  ModelConfig model;
};

ToyCorpus overfit_corpus() {
  SyntheticSpec spec;
  spec.dialogs = 8;
  ToyCorpus c;
  c.train = expand_dialogs(make_synthetic_dialogs(spec), AugmentMode::per_turn, 1, 1);
  SyntheticSpec held = spec;
  held.dialogs = 4;
  held.first_index = 8;
  c.held_out = expand_dialogs(make_synthetic_dialogs(held), AugmentMode::per_turn, 1, 1);
  c.model.hidden = 32;
  c.model.embedding_width = 32;
  c.model.flow_width = spec.flow_width;
  c.model.rgb_width = spec.rgb_width;
  c.model.audio_width = spec.audio_width;
  return c;
}

Outcome overfit() {
  const ToyCorpus c = overfit_corpus();
  const Vocabulary vocab = build_vocabulary(c.train);
  std::size_t longest = 0;
  for (const auto& ex : c.train) longest = std::max(longest, ex.answer.size());
  TrainingConfig tc;
  tc.adam.learning_rate = 5e-3;
  tc.max_epochs = 500;
  tc.patience = 500;
  const auto start = Clock::now();
  const TrainResult r = train(c.train, c.train, make_model(c.model, vocab), tc);
  const double elapsed = seconds_since(start);
  const double f1 = mean_token_f1(r.model, c.train, tc.max_answer_length);
  const bool ok = f1 == 1.0 && r.best_epoch <= 500 && elapsed < 300.0 && vocab.size() - 4 <= 40 && longest <= 6;
  return {ok, fmt("%zu examples, vocab %zu, answers <= %zu tokens: training token-F1 %.4f at epoch %zu, %.1f s < 300 s",
                  c.train.size(), vocab.size() - 4, longest, f1, r.best_epoch, elapsed)};
}

// ---------------------------------------------------------------------------

Outcome ablation_direction() {
  // Protocol: seeds 1..3 (initialization and training), 150-epoch budget,
  // epochs until every training answer is generated exactly; compare means.
  constexpr std::size_t budget = 150;
  const ToyCorpus c = overfit_corpus();
  std::string per_seed;
  double sums[2] = {0, 0};
  const LossMode modes[2] = {LossMode::teacher_forcing, LossMode::free_running};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (int k = 0; k < 2; ++k) {
      ModelConfig mc = c.model;
      mc.init_seed = seed;
      TrainingConfig tc;
      tc.seed = seed;
      tc.adam.learning_rate = 5e-3;
      tc.max_epochs = budget;
      tc.patience = budget;
      tc.loss = modes[k];
      std::size_t reached = budget + 1;
      train(c.train, c.held_out, make_model(mc, build_vocabulary(c.train)), tc,
            [&](const EpochRecord& rec, const Model& current) {
              for (const auto& ex : c.train) {
                if (generate_answer(current, ex, tc.max_answer_length) != ex.answer) return true;
              }
              reached = rec.epoch;
              return false;
            });
      sums[k] += static_cast<double>(reached);
      per_seed += fmt(" %s=%zu", k == 0 ? "tf" : "fr", reached);
    }
    per_seed += seed < 3 ? ";" : "";
  }
  const double tf = sums[0] / 3.0, fr = sums[1] / 3.0;
  return {tf < fr, fmt("mean epochs to training exact match: teacher forcing %.1f vs free-running %.1f "
                       "(need strictly fewer);%s",
                       tf, fr, per_seed.c_str())};
}

// ---------------------------------------------------------------------------

Outcome empty_history_contract() {
  SyntheticSpec spec;
  spec.dialogs = 4;
  spec.frames = 3;
  const auto dialogs = make_synthetic_dialogs(spec);
  std::vector<DialogExample> first_turns, later_turns;
  for (const auto& d : dialogs) {
    const auto xs = expand_per_turn(d);
    first_turns.push_back(xs.front());
    later_turns.push_back(xs.back());
  }
  ModelConfig mc;
  mc.hidden = 4;
  mc.embedding_width = 6;
  mc.flow_width = spec.flow_width;
  mc.rgb_width = spec.rgb_width;
  mc.audio_width = spec.audio_width;
  std::vector<DialogExample> all = first_turns;
  all.insert(all.end(), later_turns.begin(), later_turns.end());
  const Model initial = make_model(mc, build_vocabulary(all));

  auto history_params_changed = [&](const std::vector<DialogExample>& batch, std::size_t& touched,
                                    std::size_t& others_changed) {
    Model m = initial;
    AdamState adam = AdamState::zeros_like(m.params);
    std::vector<EncodedExample> enc;
    for (const auto& ex : batch) enc.push_back(encode_example(m, ex));
    Rng rng(1);
    TrainingConfig tc;
    train_step(m, adam, enc, tc, rng);
    touched = 0;
    others_changed = 0;
    std::size_t changed = 0;
    for (std::size_t p = 0; p < m.params.size(); ++p) {
      const bool is_history = m.params.name(p).rfind("history.", 0) == 0;
      const auto& before = initial.params.value(p).data();
      const auto& after = m.params.value(p).data();
      bool differs = false;
      for (std::size_t i = 0; i < before.size(); ++i) {
        differs = differs || std::bit_cast<std::uint64_t>(before[i]) != std::bit_cast<std::uint64_t>(after[i]);
      }
      if (is_history) {
        ++touched;
        changed += differs;
      } else {
        others_changed += differs;
      }
    }
    return changed;
  };
  std::size_t hist_params = 0, others = 0, control_hist = 0, control_others = 0;
  const std::size_t changed = history_params_changed(first_turns, hist_params, others);
  const std::size_t control = history_params_changed(later_turns, control_hist, control_others);
  const bool ok = hist_params > 0 && changed == 0 && others > 0 && control > 0;
  return {ok, fmt("history-free batch: %zu/%zu history parameters moved (bitwise), %zu other parameters moved; "
                  "control batch with history moved %zu/%zu",
                  changed, hist_params, others, control, control_hist)};
}

// ---------------------------------------------------------------------------

struct RunBytes {
  std::string augmented, checkpoint, log, scores;
};

RunBytes full_run(const TempDir& dir) {
  SyntheticSpec spec;
  spec.dialogs = 3;
  spec.frames = 3;
  spec.flow_width = 3;
  spec.rgb_width = 2;
  spec.audio_width = 2;
  testing_support::write_dataset(dir / "raw.json", make_synthetic_dialogs(spec));
  spec.first_index = 3;
  spec.dialogs = 2;
  testing_support::write_dataset(dir / "val.json", make_synthetic_dialogs(spec));
  run_augment(dir / "raw.json", dir / "train.json", AugmentMode::shuffle, 2, 9);
  write_file_atomic(dir / "config.json", R"({
  "data": {"train": "train.json", "val": "val.json"},
  "model": {"hidden": 4, "embedding_width": 6, "init_seed": 3},
  "training": {"max_epochs": 3, "patience": 3, "seed": 5, "learning_rate": 0.01,
               "loss": "scheduled-sampling", "sampling_probability": 0.3}
})");
  run_train(load_run_config(dir / "config.json"), dir / "model.ckpt");
  run_eval(dir / "model.ckpt", dir / "val.json", dir / "scores.txt");
  return {read_file(dir / "train.json"), read_file(dir / "model.ckpt"), read_file(dir / "model.ckpt.log"),
          read_file(dir / "scores.txt")};
}

Outcome determinism() {
  TempDir a, b;
  const RunBytes x = full_run(a), y = full_run(b);
  const bool ok = x.augmented == y.augmented && x.checkpoint == y.checkpoint && x.log == y.log &&
                  x.scores == y.scores;
  return {ok, fmt("two augment -> train -> eval runs: augmented dataset %s (%zu B), checkpoint %s (%zu B), "
                  "score table %s",
                  x.augmented == y.augmented ? "identical" : "DIFFERS", x.augmented.size(),
                  x.checkpoint == y.checkpoint ? "identical" : "DIFFERS", x.checkpoint.size(),
                  x.scores == y.scores ? "identical" : "DIFFERS")};
}

// ---------------------------------------------------------------------------

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

Tensor random_floats(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor m(rows, cols);
  for (double& v : m.data()) {
    switch (rng.below(4)) {
      case 0: v = static_cast<float>(rng.uniform(-1, 1)); break;
      case 1: v = static_cast<float>(rng.uniform(-1e30, 1e30)); break;
      case 2: v = static_cast<float>(rng.uniform(-1e-40, 1e-40)); break;  // subnormal floats
      default: v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next_u64()) & 0x3FFFFFFFu); break;
    }
  }
  return m;
}

std::string random_text(Rng& rng) {
  static const std::vector<std::string> words = {"Is",    "there", "a",   "MAN", "with", "beard", "dog's",
                                                 "room,", "red.",  "ok?", "\xc3\xa9t\xc3\xa9", "  ", "3"};
  std::string s;
  const std::size_t n = between(rng, 1, 7);
  for (std::size_t i = 0; i < n; ++i) s += words[rng.below(words.size())] + (rng.below(3) == 0 ? "\t" : " ");
  return s + "x";
}

bool dataset_round_trip(Rng& rng, const TempDir& dir, int trial) {
  const fs::path sub = dir / ("ds" + std::to_string(trial));
  fs::create_directories(sub);
  nlohmann::ordered_json doc;
  doc["format"] = rng.below(2) ? "dialogs" : "examples";
  doc["dialogs"] = nlohmann::ordered_json::array();
  const std::size_t dialogs = between(rng, 1, 4);
  for (std::size_t i = 0; i < dialogs; ++i) {
    nlohmann::ordered_json d;
    d["video_id"] = "clip-" + std::to_string(trial) + "-" + std::to_string(i);
    d["summary"] = random_text(rng);
    d["turns"] = nlohmann::ordered_json::array();
    for (std::size_t t = between(rng, 1, 4); t > 0; --t) {
      d["turns"].push_back({{"question", random_text(rng)}, {"answer", random_text(rng)}});
    }
    if (rng.below(2)) {
      const std::string stem = "f" + std::to_string(i);
      for (const char* stream : {"flow", "rgb", "audio"}) {
        save_features(sub / (stem + stream), random_floats(rng, between(rng, 1, 4), between(rng, 1, 4)));
        d["features"][stream] = stem + stream;
      }
    }
    doc["dialogs"].push_back(d);
  }
  write_file_atomic(sub / "in.json", doc.dump());
  const Dataset first = load_dataset(sub / "in.json");
  save_dataset(sub / "a.json", first);
  const Dataset second = load_dataset(sub / "a.json");
  save_dataset(sub / "b.json", second);
  return read_file(sub / "a.json") == read_file(sub / "b.json") && first.dialogs() == second.dialogs();
}

bool feature_round_trip(Rng& rng, const TempDir& dir, int trial) {
  const fs::path a = dir / ("feat_a" + std::to_string(trial)), b = dir / ("feat_b" + std::to_string(trial));
  const Tensor m = random_floats(rng, between(rng, 1, 9), between(rng, 1, 9));
  save_features(a, m);
  const Tensor back = load_features(a);
  save_features(b, back);
  return read_file(a) == read_file(b) && back == m;
}

bool checkpoint_round_trip(Rng& rng, const TempDir& dir, int trial) {
  ModelConfig mc;
  mc.use_video = rng.below(2) == 1;
  mc.cell = rng.below(2) ? CellKind::gru : CellKind::lstm;
  mc.pooling = rng.below(2) ? Pooling::max : Pooling::average;
  mc.hidden = between(rng, 1, 3);
  mc.embedding_width = between(rng, 1, 4);
  mc.decoder_hidden = rng.below(2) ? 0 : mc.encoder_width() + between(rng, 0, 3);
  mc.flow_width = between(rng, 1, 3);
  mc.rgb_width = between(rng, 1, 3);
  mc.audio_width = between(rng, 1, 3);
  mc.init_seed = rng.next_u64();
  Vocabulary vocab;
  for (std::size_t i = between(rng, 0, 6); i > 0; --i) vocab.add("w" + std::to_string(rng.below(50)));
  Model m = make_model(mc, vocab);
  AdamState adam;
  if (rng.below(3) != 0) {
    adam = AdamState::zeros_like(m.params);
    for (auto* moments : {&adam.m, &adam.v})
      for (Tensor& t : *moments)
        for (double& v : t.data()) v = std::bit_cast<double>(rng.next_u64() & 0x3FEFFFFFFFFFFFFFull);
    adam.step = rng.below(100000);
  }
  for (Tensor& p : m.params.values())
    for (double& v : p.data()) v = rng.uniform(-10, 10);
  TrainingConfig tc;
  tc.seed = rng.next_u64();
  tc.adam.learning_rate = rng.uniform(1e-5, 1e-1);
  tc.sampling_probability = rng.uniform();
  const fs::path a = dir / ("ck_a" + std::to_string(trial)), b = dir / ("ck_b" + std::to_string(trial));
  save_checkpoint(a, make_checkpoint(m, adam, tc));
  const RestoredCheckpoint rc = restore_checkpoint(load_checkpoint(a));
  save_checkpoint(b, make_checkpoint(rc.model, rc.adam, rc.training));
  return read_file(a) == read_file(b);
}

Outcome format_round_trips() {
  TempDir dir;
  Rng rng(8);
  int ok[3] = {0, 0, 0};
  for (int trial = 0; trial < 100; ++trial) {
    ok[0] += dataset_round_trip(rng, dir, trial);
    ok[1] += feature_round_trip(rng, dir, trial);
    ok[2] += checkpoint_round_trip(rng, dir, trial);
  }
  return {ok[0] == 100 && ok[1] == 100 && ok[2] == 100,
          fmt("write -> read -> write bitwise identical: datasets %d/100, features %d/100, checkpoints %d/100", ok[0],
              ok[1], ok[2])};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmqa acceptance checks"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradient_correctness},
      {2, "metric oracle equivalence", metric_equivalence},
      {3, "augmentation counting", augmentation_counting},
      {4, "overfit", overfit},
      {5, "ablation direction (teacher forcing vs free-running)", ablation_direction},
      {6, "empty-history contract", empty_history_contract},
      {7, "determinism", determinism},
      {8, "format round-trips", format_round_trips},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.passed;
    std::cout << "criterion " << c.id << ": " << (o.passed ? "PASS" : "FAIL") << "  " << c.title << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
