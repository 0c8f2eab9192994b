#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mmqa/data.hpp"
#include "mmqa/random.hpp"
#include "mmqa/tensor.hpp"
#include "mmqa/text.hpp"

namespace mmqa {

/// Shape of a templated toy corpus.
struct SyntheticSpec {
  std::size_t dialogs = 8;
  std::size_t turns = 3;  // at most 3 templated turns
  std::size_t frames = 4;
  std::size_t flow_width = 6;
  std::size_t rgb_width = 5;
  std::size_t audio_width = 4;
  bool with_features = true;
  std::uint64_t seed = 7;
  /// Offset into the attribute grid, so that disjoint splits share templates.
  std::size_t first_index = 0;
};

/// Dialogs about one object, its action and the room color. Answers are
/// recoverable from the summary; features are seeded uniform noise.
inline std::vector<Dialog> make_synthetic_dialogs(const SyntheticSpec& spec) {
  static const std::vector<std::string> objects = {"man", "woman", "dog", "cat"};
  static const std::vector<std::string> actions = {"sitting", "walking", "cooking", "reading"};
  static const std::vector<std::string> colors = {"red", "blue", "green", "black", "white"};
  Rng rng(spec.seed);
  std::vector<Dialog> out;
  for (std::size_t i = 0; i < spec.dialogs; ++i) {
    const std::size_t k = spec.first_index + i;
    const std::string& obj = objects[k % objects.size()];
    const std::string& act = actions[(k / objects.size() + k) % actions.size()];
    const std::string& col = colors[(k * 3 + 1) % colors.size()];
    Dialog d;
    d.video_id = "video" + std::to_string(k);
    d.summary = tokenize("a " + obj + " is " + act + " in a " + col + " room .");
    const std::vector<QaPair> templates = {
        {tokenize("is there a " + obj + " ?"), tokenize("yes , a " + obj + " .")},
        {tokenize("what is the " + obj + " doing ?"), tokenize("the " + obj + " is " + act + " .")},
        {tokenize("what color is the room ?"), tokenize("the room is " + col + " .")},
    };
    for (std::size_t t = 0; t < std::min(spec.turns, templates.size()); ++t) d.turns.push_back(templates[t]);
    if (spec.with_features) {
      auto noise = [&](std::size_t width) {
        Tensor m(spec.frames, width);
        for (double& v : m.data()) v = static_cast<double>(static_cast<float>(rng.uniform(-1.0, 1.0)));
        return m;
      };
      d.features.flow = noise(spec.flow_width);
      d.features.rgb = noise(spec.rgb_width);
      d.features.audio = noise(spec.audio_width);
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace mmqa
