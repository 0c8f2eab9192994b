#include <cmath>

#include <gtest/gtest.h>

#include "metric_oracle.hpp"
#include "mmqa/metrics.hpp"
#include "mmqa/text.hpp"

using namespace mmqa;

namespace {

ScoredCorpus single(const std::string& cand, const std::string& ref) {
  return {{tokenize(cand)}, {{tokenize(ref)}}};
}

ScoredCorpus to_scored(const oracle::Corpus& c) { return {c.candidates, c.references}; }

}  // namespace

TEST(Bleu, PerfectMatch) {
  const auto c = single("the man is sitting .", "the man is sitting .");
  for (std::size_t n = 1; n <= 4; ++n) EXPECT_DOUBLE_EQ(bleu(c, n), 1.0);
}

TEST(Bleu, ClippedUnigramsWithoutBrevityPenalty) {
  // c = 4 >= r = 2, so no brevity penalty applies.
  const auto c = single("the the the the", "the cat");
  EXPECT_DOUBLE_EQ(bleu(c, 1), 0.25);
  EXPECT_DOUBLE_EQ(bleu(c, 2), 0.0);
}

TEST(Bleu, BrevityPenaltyWhenShort) {
  const auto c = single("the cat", "the cat sat down");
  EXPECT_DOUBLE_EQ(bleu(c, 1), std::exp(1.0 - 4.0 / 2.0));
}

TEST(Bleu, ClosestReferenceShorterWinsTies) {
  // c = 3; references of length 2 and 4 are equally close, 2 is chosen: no penalty.
  ScoredCorpus c{{tokenize("a b c")}, {{tokenize("a b"), tokenize("a b c d")}}};
  EXPECT_DOUBLE_EQ(bleu_stats(c).reference_length, 2.0);
  EXPECT_DOUBLE_EQ(bleu(c, 1), 1.0);
}

TEST(Bleu, EmptyCandidateAndBadOrder) {
  const auto c = single("", "a b");
  EXPECT_EQ(bleu(c, 1), 0.0);
  EXPECT_THROW(bleu(c, 5), ValidationError);
  ScoredCorpus bad{{tokenize("a")}, {}};
  EXPECT_THROW(bleu(bad, 1), ValidationError);
}

TEST(RougeL, HandCases) {
  EXPECT_DOUBLE_EQ(rouge_l(single("a b c", "a b c")), 1.0);
  // LCS 2, P = 1, R = 2/3: 2.2 (2/3) / (2/3 + 1.2) = 11/14.
  EXPECT_NEAR(rouge_l(single("a c", "a b c")), 11.0 / 14.0, 1e-15);
  EXPECT_EQ(rouge_l(single("x y", "a b c")), 0.0);
  EXPECT_EQ(rouge_l(single("", "a b c")), 0.0);
}

TEST(RougeL, BestReferenceWins) {
  ScoredCorpus c{{tokenize("a c")}, {{tokenize("x y z"), tokenize("a b c")}}};
  EXPECT_NEAR(rouge_l(c), 11.0 / 14.0, 1e-15);
}

TEST(Cider, TwoDistinctExamplesScoreTen) {
  ScoredCorpus c{{tokenize("a man sits ."), tokenize("dogs run fast !")},
                 {{tokenize("a man sits .")}, {tokenize("dogs run fast !")}}};
  EXPECT_NEAR(cider(c), 10.0, 1e-12);
}

TEST(Cider, SingleExampleIsDegenerate) {
  const auto c = single("a b", "a b");
  EXPECT_TRUE(cider_idf_degenerate(c));
  EXPECT_EQ(cider(c), 0.0);
}

TEST(Cider, DisjointCandidateScoresZero) {
  ScoredCorpus c{{tokenize("p q r"), tokenize("a b")}, {{tokenize("a b c")}, {tokenize("d e")}}};
  EXPECT_EQ(cider_n_per_example(c, 1)[0], 0.0);
}

TEST(Cider, UnigramCosineIsScaleInvariant) {
  ScoredCorpus a{{tokenize("a b c"), tokenize("d e")}, {{tokenize("a b d")}, {tokenize("d e f")}}};
  ScoredCorpus b = a;
  b.candidates[0] = tokenize("a b c a b c");
  EXPECT_NEAR(cider_n_per_example(a, 1)[0], cider_n_per_example(b, 1)[0], 1e-15);
}

TEST(TokenF1, HandCases) {
  EXPECT_DOUBLE_EQ(token_f1(Tokens{"a", "b"}, Tokens{"b", "c"}), 0.5);
  EXPECT_DOUBLE_EQ(token_f1(Tokens{"a", "b"}, Tokens{"a", "b"}), 1.0);
  EXPECT_DOUBLE_EQ(token_f1(Tokens{"a"}, Tokens{"b"}), 0.0);
  EXPECT_DOUBLE_EQ(token_f1(Tokens{}, Tokens{"b"}), 0.0);
  // Multiset: one shared "a" out of two predicted.
  EXPECT_DOUBLE_EQ(token_f1(Tokens{"a", "a"}, Tokens{"a"}), 2.0 / 3.0);
}

TEST(ScoreTable, KeysAndPerfectScores) {
  ScoredCorpus c{{tokenize("a man sits ."), tokenize("dogs run fast !")},
                 {{tokenize("a man sits .")}, {tokenize("dogs run fast !")}}};
  const auto t = score_corpus(c);
  ASSERT_EQ(t.size(), 7u);
  const char* keys[] = {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider", "token_f1"};
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(t[i].first, keys[i]);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(t[i].second, i == 5 ? 10.0 : 1.0, 1e-12);
  ScoredCorpus empty{{Tokens{}, Tokens{}}, c.references};
  for (const auto& [k, v] : score_corpus(empty)) EXPECT_EQ(v, 0.0) << k;
}

TEST(Oracle, RandomCorporaAgree) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto oc = oracle::random_corpus(rng);
    const auto c = to_scored(oc);
    for (std::size_t n = 1; n <= 4; ++n) EXPECT_NEAR(bleu(c, n), oracle::bleu(oc, n), 1e-9) << trial;
    EXPECT_NEAR(rouge_l(c), oracle::rouge_l(oc), 1e-9) << trial;
    EXPECT_NEAR(cider(c), oracle::cider(oc), 1e-9) << trial;
  }
}

TEST(Oracle, LcsMatchesDynamicProgramme) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto oc = oracle::random_corpus(rng);
    for (std::size_t e = 0; e < oc.candidates.size(); ++e)
      for (const auto& r : oc.references[e]) EXPECT_EQ(lcs_length(oc.candidates[e], r), oracle::lcs(oc.candidates[e], r));
  }
}
