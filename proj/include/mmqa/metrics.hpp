#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mmqa/error.hpp"
#include "mmqa/text.hpp"

namespace mmqa {

/// Candidates aligned by index with one or more references each.
struct ScoredCorpus {
  std::vector<Tokens> candidates;
  std::vector<std::vector<Tokens>> references;

  void validate() const {
    if (candidates.size() != references.size()) {
      throw ValidationError("corpus: " + std::to_string(candidates.size()) + " candidates but " +
                            std::to_string(references.size()) + " reference sets");
    }
    for (const auto& refs : references) {
      if (refs.empty()) throw ValidationError("corpus: example without references");
    }
  }
};

using NgramCounts = std::map<Tokens, std::size_t>;

inline NgramCounts ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

/// Corpus-level clipped n-gram statistics shared by BLEU-1..4.
struct BleuStats {
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};
  double candidate_length = 0;
  double reference_length = 0;
};

inline BleuStats bleu_stats(const ScoredCorpus& corpus) {
  corpus.validate();
  BleuStats s;
  for (std::size_t e = 0; e < corpus.candidates.size(); ++e) {
    const Tokens& cand = corpus.candidates[e];
    const auto& refs = corpus.references[e];
    const std::size_t c = cand.size();
    // Closest reference length; the shorter one wins ties.
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto diff = [c](std::size_t len) { return len > c ? len - c : c - len; };
      if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) {
        best = r.size();
      }
    }
    s.candidate_length += static_cast<double>(c);
    s.reference_length += static_cast<double>(best);
    for (std::size_t k = 1; k <= 4; ++k) {
      const auto cand_counts = ngram_counts(cand, k);
      NgramCounts max_ref;
      for (const auto& r : refs) {
        for (const auto& [g, n] : ngram_counts(r, k)) max_ref[g] = std::max(max_ref[g], n);
      }
      for (const auto& [g, n] : cand_counts) {
        auto it = max_ref.find(g);
        if (it != max_ref.end()) s.matches[k - 1] += static_cast<double>(std::min(n, it->second));
        s.totals[k - 1] += static_cast<double>(n);
      }
    }
  }
  return s;
}

/// Geometric mean of clipped 1..n-gram precisions times the brevity penalty
/// exp(1 - r/c) when c < r. Unsmoothed: any zero precision gives 0.
inline double bleu(const BleuStats& s, std::size_t n) {
  if (n < 1 || n > 4) throw ValidationError("bleu: order must be 1..4");
  if (s.candidate_length == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (s.totals[k] == 0 || s.matches[k] == 0) return 0.0;
    log_sum += std::log(s.matches[k] / s.totals[k]);
  }
  const double bp = s.candidate_length < s.reference_length
                        ? std::exp(1.0 - s.reference_length / s.candidate_length)
                        : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(n));
}

inline double bleu(const ScoredCorpus& corpus, std::size_t n) { return bleu(bleu_stats(corpus), n); }

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline constexpr double rouge_beta_sq = 1.2;

/// LCS F-measure (1+β²)PR / (R + β²P), best over references.
inline double rouge_l(std::span<const std::string> candidate, std::span<const Tokens> references) {
  double best = 0.0;
  for (const auto& ref : references) {
    if (candidate.empty() || ref.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    best = std::max(best, (1.0 + rouge_beta_sq) * p * r / (r + rouge_beta_sq * p));
  }
  return best;
}

inline double rouge_l(const ScoredCorpus& corpus) {
  corpus.validate();
  if (corpus.candidates.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t e = 0; e < corpus.candidates.size(); ++e) {
    total += rouge_l(corpus.candidates[e], corpus.references[e]);
  }
  return total / static_cast<double>(corpus.candidates.size());
}

/// IDF is log(N / df) over the corpus's reference sets; a single-example
/// corpus makes every reference n-gram weightless.
inline bool cider_idf_degenerate(const ScoredCorpus& corpus) { return corpus.candidates.size() <= 1; }

/// Mean over examples of the mean-over-references TF-IDF cosine at order n.
inline std::vector<double> cider_n_per_example(const ScoredCorpus& corpus, std::size_t n) {
  corpus.validate();
  const std::size_t examples = corpus.candidates.size();
  std::map<Tokens, double> df;
  for (const auto& refs : corpus.references) {
    std::set<Tokens> present;
    for (const auto& r : refs)
      for (const auto& [g, c] : ngram_counts(r, n)) present.insert(g);
    for (const auto& g : present) df[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(std::max<std::size_t>(examples, 1)));
  auto tfidf = [&](std::span<const std::string> tokens) {
    const auto counts = ngram_counts(tokens, n);
    double total = 0.0;
    for (const auto& [g, c] : counts) total += static_cast<double>(c);
    std::map<Tokens, double> vec;
    for (const auto& [g, c] : counts) {
      auto it = df.find(g);
      const double d = it == df.end() ? 1.0 : std::max(1.0, it->second);
      vec[g] = static_cast<double>(c) / total * (log_n - std::log(d));
    }
    return vec;
  };
  auto norm = [](const std::map<Tokens, double>& v) {
    double s = 0.0;
    for (const auto& [g, x] : v) s += x * x;
    return std::sqrt(s);
  };
  std::vector<double> out(examples, 0.0);
  for (std::size_t e = 0; e < examples; ++e) {
    const auto cand = tfidf(corpus.candidates[e]);
    const double cn = norm(cand);
    double sum = 0.0;
    for (const auto& r : corpus.references[e]) {
      const auto ref = tfidf(r);
      const double rn = norm(ref);
      if (cn == 0.0 || rn == 0.0) continue;
      double dot = 0.0;
      for (const auto& [g, x] : cand) {
        auto it = ref.find(g);
        if (it != ref.end()) dot += x * it->second;
      }
      sum += dot / (cn * rn);
    }
    out[e] = sum / static_cast<double>(corpus.references[e].size());
  }
  return out;
}

inline double cider_n(const ScoredCorpus& corpus, std::size_t n) {
  const auto per = cider_n_per_example(corpus, n);
  if (per.empty()) return 0.0;
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(per.size());
}

/// Length-penalty-free CIDEr: 10 × mean over n = 1..4 of cider_n.
inline double cider(const ScoredCorpus& corpus) {
  double total = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) total += cider_n(corpus, n);
  return 10.0 * total / 4.0;
}

/// Multiset token-overlap F1; 0 when either side is empty.
inline double token_f1(std::span<const std::string> pred, std::span<const std::string> gold) {
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : gold) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

/// Metric name → value, in a fixed key order.
using ScoreTable = std::vector<std::pair<std::string, double>>;

inline ScoreTable score_corpus(const ScoredCorpus& corpus) {
  const auto stats = bleu_stats(corpus);
  ScoreTable table;
  for (std::size_t n = 1; n <= 4; ++n) table.emplace_back("bleu" + std::to_string(n), bleu(stats, n));
  table.emplace_back("rouge_l", rouge_l(corpus));
  table.emplace_back("cider", cider(corpus));
  double f1 = 0.0;
  for (std::size_t e = 0; e < corpus.candidates.size(); ++e) {
    f1 += token_f1(corpus.candidates[e], corpus.references[e].front());
  }
  table.emplace_back("token_f1", corpus.candidates.empty() ? 0.0 : f1 / static_cast<double>(corpus.candidates.size()));
  return table;
}

}  // namespace mmqa
