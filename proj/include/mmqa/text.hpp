#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmqa/error.hpp"
#include "mmqa/random.hpp"
#include "mmqa/tensor.hpp"

namespace mmqa {

using Tokens = std::vector<std::string>;

/// Lowercases, detaches . , ? ! ' " as their own tokens, splits on whitespace.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      flush();
    } else if (ch == '.' || ch == ',' || ch == '?' || ch == '!' || ch == '\'' || ch == '"') {
      flush();
      out.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  flush();
  return out;
}

inline std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

/// Sorted distinct character trigrams of `<token>`.
inline std::vector<std::string> char_trigrams(std::string_view token) {
  const std::string padded = "<" + std::string(token) + ">";
  std::vector<std::string> grams;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.push_back(padded.substr(i, 3));
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

/// Dice coefficient 2|A∩B| / (|A|+|B|) over sorted distinct sets.
inline double dice(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

/// Token ↔ id map with fixed reserved ids PAD=0, SOS=1, EOS=2, UNK=3.
class Vocabulary {
 public:
  static constexpr std::size_t pad_id = 0;
  static constexpr std::size_t sos_id = 1;
  static constexpr std::size_t eos_id = 2;
  static constexpr std::size_t unk_id = 3;
  static constexpr std::size_t reserved_count = 4;
  /// Minimum trigram Dice for an OOV token to borrow a known row.
  static constexpr double fallback_floor = 0.3;

  Vocabulary() {
    for (const char* name : {"<pad>", "<sos>", "<eos>", "<unk>"}) {
      index_.emplace(name, tokens_.size());
      tokens_.emplace_back(name);
      trigrams_.emplace_back();
    }
  }

  /// Returns the id of `token`, inserting it when new.
  std::size_t add(const std::string& token) {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    if (token.empty()) throw ValidationError("vocabulary: empty token");
    const std::size_t id = tokens_.size();
    index_.emplace(token, id);
    tokens_.push_back(token);
    trigrams_.push_back(char_trigrams(token));
    return id;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }

  std::optional<std::size_t> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Row used for `token`: exact match, else the most trigram-similar known
  /// token (lower id on ties) if its Dice reaches the floor, else UNK.
  std::size_t resolve(const std::string& token) const {
    if (auto exact = find(token)) return *exact;
    const auto query = char_trigrams(token);
    std::size_t best = unk_id;
    double best_score = fallback_floor;
    bool found = false;
    for (std::size_t id = reserved_count; id < tokens_.size(); ++id) {
      const double s = dice(query, trigrams_[id]);
      if (found ? s > best_score : s >= best_score) {
        best = id;
        best_score = s;
        found = true;
      }
    }
    return best;
  }

  /// Id used as a training target: exact match or UNK.
  std::size_t target_id(const std::string& token) const { return find(token).value_or(unk_id); }

  /// Non-reserved tokens in id order (the vocabulary file body).
  std::span<const std::string> user_tokens() const {
    return std::span<const std::string>(tokens_).subspan(reserved_count);
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::vector<std::string>> trigrams_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Parses the vocabulary file body: one token per line, line k holds id k+4.
inline Vocabulary parse_vocabulary(std::string_view text) {
  Vocabulary vocab;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    if (line.empty()) throw ValidationError("vocabulary line " + std::to_string(line_no) + ": empty token");
    const std::size_t before = vocab.size();
    if (vocab.add(line) != before) {
      throw ValidationError("vocabulary line " + std::to_string(line_no) + ": duplicate token '" +
                            line + "'");
    }
    start = end + 1;
  }
  return vocab;
}

inline std::string format_vocabulary(const Vocabulary& vocab) {
  std::string out;
  for (const auto& t : vocab.user_tokens()) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

/// Seeded uniform [-0.1, 0.1] |V|×d_w table.
inline Tensor init_embedding_table(std::size_t vocab_size, std::size_t width, Rng& rng) {
  Tensor table(vocab_size, width);
  for (double& v : table.data()) v = rng.uniform(-0.1, 0.1);
  return table;
}

inline Tensor embed_token(const Vocabulary& vocab, const Tensor& table, const std::string& token) {
  if (table.rows() != vocab.size()) {
    throw ValidationError("embedding table has " + std::to_string(table.rows()) +
                          " rows for a vocabulary of " + std::to_string(vocab.size()));
  }
  const std::size_t id = vocab.resolve(token);
  Tensor out(1, table.cols());
  std::copy_n(&table(id, 0), table.cols(), out.data().data());
  return out;
}

inline Tensor embed_sentence(const Vocabulary& vocab, const Tensor& table, std::span<const std::string> tokens) {
  if (tokens.empty()) throw ValidationError("embed_sentence: empty token list");
  std::vector<Tensor> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) rows.push_back(embed_token(vocab, table, t));
  return concat_rows(rows);
}

}  // namespace mmqa
