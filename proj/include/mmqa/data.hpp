#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmqa/error.hpp"
#include "mmqa/random.hpp"
#include "mmqa/tensor.hpp"
#include "mmqa/text.hpp"

namespace mmqa {

/// Precomputed frame-wise streams; absent in text-only data.
struct VideoFeatures {
  std::optional<Tensor> flow;
  std::optional<Tensor> rgb;
  std::optional<Tensor> audio;

  bool complete() const { return flow && rgb && audio; }
  friend bool operator==(const VideoFeatures&, const VideoFeatures&) = default;
};

struct QaPair {
  Tokens question;
  Tokens answer;
  friend bool operator==(const QaPair&, const QaPair&) = default;
};

/// One video's full dialog as stored on disk.
struct Dialog {
  std::string video_id;
  Tokens summary;
  std::vector<QaPair> turns;
  VideoFeatures features;
  friend bool operator==(const Dialog&, const Dialog&) = default;
};

/// One training item: answer `answer` to `question` given `history`.
struct DialogExample {
  std::string video_id;
  Tokens question;
  Tokens answer;
  std::vector<QaPair> history;
  Tokens summary;
  VideoFeatures features;
  friend bool operator==(const DialogExample&, const DialogExample&) = default;
};

enum class AugmentMode { basic, per_turn, shuffle };

inline void require_turns(const Dialog& d) {
  if (d.turns.empty()) throw ValidationError("dialog '" + d.video_id + "' has no turns");
}

inline DialogExample example_at(const Dialog& d, std::size_t turn) {
  DialogExample ex;
  ex.video_id = d.video_id;
  ex.question = d.turns[turn].question;
  ex.answer = d.turns[turn].answer;
  ex.history.assign(d.turns.begin(), d.turns.begin() + static_cast<std::ptrdiff_t>(turn));
  ex.summary = d.summary;
  ex.features = d.features;
  return ex;
}

/// Last turn as the target, every earlier turn as history.
inline std::vector<DialogExample> expand_basic(const Dialog& d) {
  require_turns(d);
  return {example_at(d, d.turns.size() - 1)};
}

/// One example per turn; example k carries the first k pairs as history.
inline std::vector<DialogExample> expand_per_turn(const Dialog& d) {
  require_turns(d);
  std::vector<DialogExample> out;
  out.reserve(d.turns.size());
  for (std::size_t k = 0; k < d.turns.size(); ++k) out.push_back(example_at(d, k));
  return out;
}

/// n! - 1, the number of distinct non-identity orderings of n history pairs.
/// Saturates at the uint64 maximum.
inline std::uint64_t permutation_capacity(std::size_t n) {
  std::uint64_t f = 1;
  for (std::size_t k = 2; k <= n; ++k) {
    if (f > std::numeric_limits<std::uint64_t>::max() / k) return std::numeric_limits<std::uint64_t>::max();
    f *= k;
  }
  return f - 1;
}

/// `count` distinct non-identity permutations of [0, n), drawn without
/// replacement. `count` must not exceed permutation_capacity(n).
inline std::vector<std::vector<std::size_t>> sample_permutations(std::size_t n, std::uint64_t count,
                                                                 Rng& rng) {
  std::vector<std::vector<std::size_t>> out;
  if (count == 0) return out;
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  const std::uint64_t capacity = permutation_capacity(n);
  if (count > capacity) throw ValidationError("requested more permutations than exist");

  if (capacity <= 5040 && count * 2 > capacity) {
    // Dense request: enumerate every non-identity ordering and take a shuffled prefix.
    std::vector<std::vector<std::size_t>> all;
    std::vector<std::size_t> p = identity;
    while (std::next_permutation(p.begin(), p.end())) all.push_back(p);
    rng.shuffle(std::span(all));
    all.resize(static_cast<std::size_t>(count));
    return all;
  }
  std::set<std::vector<std::size_t>> seen{identity};
  while (out.size() < count) {
    std::vector<std::size_t> p = identity;
    rng.shuffle(std::span(p));
    if (seen.insert(p).second) out.push_back(std::move(p));
  }
  return out;
}

/// Per-turn expansion plus, for each example with n >= 2 history pairs,
/// min(factor - 1, n! - 1) copies whose pair order is a distinct
/// non-identity permutation. Pairs move as intact (q, a) units.
inline std::vector<DialogExample> expand_shuffle(const Dialog& d, std::size_t factor,
                                                 std::uint64_t seed) {
  if (factor < 1) throw ValidationError("augmentation factor must be >= 1");
  Rng rng(seed);
  std::vector<DialogExample> out;
  for (auto& ex : expand_per_turn(d)) {
    const std::size_t n = ex.history.size();
    const std::uint64_t extra =
        std::min<std::uint64_t>(factor - 1, n >= 2 ? permutation_capacity(n) : 0);
    auto perms = sample_permutations(n, extra, rng);
    out.push_back(ex);
    for (const auto& perm : perms) {
      DialogExample copy = ex;
      for (std::size_t i = 0; i < n; ++i) copy.history[i] = ex.history[perm[i]];
      out.push_back(std::move(copy));
    }
  }
  return out;
}

/// Expands every dialog; dialog i uses the derived seed mix_seed(seed, i).
inline std::vector<DialogExample> expand_dialogs(const std::vector<Dialog>& dialogs, AugmentMode mode,
                                                 std::size_t factor, std::uint64_t seed) {
  std::vector<DialogExample> out;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    std::vector<DialogExample> part;
    switch (mode) {
      case AugmentMode::basic: part = expand_basic(dialogs[i]); break;
      case AugmentMode::per_turn: part = expand_per_turn(dialogs[i]); break;
      case AugmentMode::shuffle: part = expand_shuffle(dialogs[i], factor, mix_seed(seed, i)); break;
    }
    for (auto& ex : part) out.push_back(std::move(ex));
  }
  return out;
}

/// Rebuilds the on-disk dialog shape of an example: history turns followed by
/// the target turn, so that expand_basic recovers the example exactly.
inline Dialog as_dialog(const DialogExample& ex) {
  Dialog d;
  d.video_id = ex.video_id;
  d.summary = ex.summary;
  d.turns = ex.history;
  d.turns.push_back({ex.question, ex.answer});
  d.features = ex.features;
  return d;
}

inline AugmentMode parse_augment_mode(const std::string& name) {
  if (name == "basic") return AugmentMode::basic;
  if (name == "per-turn") return AugmentMode::per_turn;
  if (name == "shuffle") return AugmentMode::shuffle;
  throw ValidationError("unknown augmentation mode '" + name + "'");
}

inline std::string to_string(AugmentMode m) {
  switch (m) {
    case AugmentMode::basic: return "basic";
    case AugmentMode::per_turn: return "per-turn";
    case AugmentMode::shuffle: return "shuffle";
  }
  return "basic";
}

}  // namespace mmqa
