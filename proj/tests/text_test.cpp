#include <set>
#include <string>

#include <gtest/gtest.h>

#include "mmqa/text.hpp"

using namespace mmqa;

namespace {

// Independent trigram Dice: std::set over the padded string.
double oracle_dice(const std::string& a, const std::string& b) {
  auto grams = [](const std::string& t) {
    const std::string p = "<" + t + ">";
    std::set<std::string> g;
    for (std::size_t i = 0; i + 3 <= p.size(); ++i) g.insert(p.substr(i, 3));
    return g;
  };
  const auto ga = grams(a), gb = grams(b);
  std::size_t common = 0;
  for (const auto& g : ga) common += gb.count(g);
  return 2.0 * static_cast<double>(common) / static_cast<double>(ga.size() + gb.size());
}

Vocabulary toy_vocab() {
  Vocabulary v;
  for (const char* t : {"a", "man", "with", "beard", "bread", "bear", "is", "that", "alone", "?", "."}) v.add(t);
  return v;
}

}  // namespace

TEST(Tokenize, FigureTwoSentences) {
  EXPECT_EQ(tokenize("Is that man alone?"), (Tokens{"is", "that", "man", "alone", "?"}));
  EXPECT_EQ(tokenize("A man with beard."), (Tokens{"a", "man", "with", "beard", "."}));
  EXPECT_EQ(tokenize(""), Tokens{});
  EXPECT_EQ(tokenize("  He said \"no\", didn't he!"),
            (Tokens{"he", "said", "\"", "no", "\"", ",", "didn", "'", "t", "he", "!"}));
}

TEST(Vocabulary, ReservedIds) {
  Vocabulary v;
  EXPECT_EQ(v.size(), 4u);
  EXPECT_EQ(v.token(Vocabulary::pad_id), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::unk_id), "<unk>");
  EXPECT_EQ(v.add("dog"), 4u);
  EXPECT_EQ(v.add("dog"), 4u);
  EXPECT_THROW(v.add(""), ValidationError);
}

TEST(Vocabulary, TypoResolvesToBestTrigramMatch) {
  const auto v = toy_vocab();
  // Exhaustive oracle over the vocabulary.
  std::size_t best = Vocabulary::unk_id;
  double best_score = -1;
  for (std::size_t id = Vocabulary::reserved_count; id < v.size(); ++id) {
    const double s = oracle_dice("bearrd", v.token(id));
    if (s > best_score) {
      best = id;
      best_score = s;
    }
  }
  ASSERT_EQ(v.token(best), "beard");
  EXPECT_GE(best_score, Vocabulary::fallback_floor);
  EXPECT_EQ(v.resolve("bearrd"), best);
  EXPECT_EQ(v.resolve("beard"), *v.find("beard"));
  EXPECT_EQ(v.resolve("zzzzqq"), Vocabulary::unk_id);
}

TEST(Vocabulary, DiceMatchesOracle) {
  const auto v = toy_vocab();
  for (const auto& q : {"bearrd", "be", "mann", "alon", "withe", "x"}) {
    for (std::size_t id = Vocabulary::reserved_count; id < v.size(); ++id) {
      EXPECT_DOUBLE_EQ(dice(char_trigrams(q), char_trigrams(v.token(id))), oracle_dice(q, v.token(id)))
          << q << " vs " << v.token(id);
    }
  }
}

TEST(Vocabulary, TiesGoToLowerId) {
  Vocabulary v;
  const auto ab = v.add("abx");
  v.add("aby");
  // "abz" shares {<ab, abx?} equally with both: only "<ab" and "ab?" differ.
  EXPECT_DOUBLE_EQ(oracle_dice("abz", "abx"), oracle_dice("abz", "aby"));
  EXPECT_EQ(v.resolve("abz"), ab);
}

TEST(Vocabulary, FileRoundTripAndErrors) {
  const auto v = toy_vocab();
  EXPECT_EQ(parse_vocabulary(format_vocabulary(v)), v);
  EXPECT_EQ(*parse_vocabulary("x\ny\n").find("y"), 5u);
  EXPECT_THROW(parse_vocabulary("x\n\ny\n"), ValidationError);
  EXPECT_THROW(parse_vocabulary("x\nx\n"), ValidationError);
}

TEST(Embedding, InitRangeAndLookup) {
  const auto v = toy_vocab();
  Rng rng(5);
  const auto table = init_embedding_table(v.size(), 6, rng);
  for (double x : table.data()) {
    EXPECT_GE(x, -0.1);
    EXPECT_LE(x, 0.1);
  }
  const auto beard = embed_token(v, table, "beard");
  for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(beard[c], table(*v.find("beard"), c));
  EXPECT_EQ(embed_token(v, table, "bearrd"), beard);
  Rng small(5);
  EXPECT_THROW(embed_token(v, init_embedding_table(3, 6, small), "beard"), ValidationError);
}

TEST(Embedding, TypoChangesOnlyItsRow) {
  const auto v = toy_vocab();
  Rng rng(9);
  const auto table = init_embedding_table(v.size(), 4, rng);
  const auto fixed = embed_sentence(v, table, Tokens{"a", "man", "with", "beard", "."});
  const auto typo = embed_sentence(v, table, Tokens{"a", "man", "with", "zzzzqq", "."});
  for (std::size_t r = 0; r < 5; ++r) {
    bool same = true;
    for (std::size_t c = 0; c < 4; ++c) same = same && fixed(r, c) == typo(r, c);
    EXPECT_EQ(same, r != 3) << "row " << r;
  }
  EXPECT_THROW(embed_sentence(v, table, Tokens{}), ValidationError);
}

TEST(Embedding, AddingTokenSwitchesToOwnRow) {
  auto v = toy_vocab();
  EXPECT_EQ(v.resolve("bearrd"), *v.find("beard"));
  const auto id = v.add("bearrd");
  EXPECT_EQ(v.resolve("bearrd"), id);
}
