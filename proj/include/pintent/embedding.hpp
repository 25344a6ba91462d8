#pragma once

#include <algorithm>
#include <cctype>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pintent/error.hpp"
#include "pintent/io.hpp"
#include "pintent/linalg.hpp"

namespace pintent {

inline constexpr std::size_t kEmbeddingDim = 50;

inline const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",  "are",  "as",   "at",   "be",   "but",  "by",   "for",  "from", "has",
      "have", "he",   "her",  "his",  "i",    "in",   "is",   "it",   "its",  "of",   "on",   "or",
      "our",  "she",  "so",   "that", "the",  "their", "them", "then", "there", "these", "they", "this",
      "to",   "was",  "we",   "were", "what", "when", "which", "who",  "will", "with", "you",  "your"};
  return words;
}

/// Lowercased alphanumeric runs; everything else separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// Pretrained word vectors, consumed as a lookup table.
struct EmbeddingTable {
  std::unordered_map<std::string, Vector> entries;
  std::set<std::string> stopwords = default_stopwords();

  std::size_t dim() const { return kEmbeddingDim; }

  void add(const std::string& token, Vector v) {
    require_dims(static_cast<std::size_t>(v.size()) == kEmbeddingDim,
                 "embedding for '" + token + "' must have " + std::to_string(kEmbeddingDim) + " entries");
    entries[token] = std::move(v);
  }
};

/// TSV rows: token followed by 50 numbers (51 tab-separated columns).
inline EmbeddingTable load_embeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != kEmbeddingDim + 1)
      fail(ErrorKind::parse, "embedding line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(kEmbeddingDim + 1) + " columns, got " + std::to_string(cols.size()));
    Vector v(static_cast<Eigen::Index>(kEmbeddingDim));
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
      try {
        std::size_t used = 0;
        v(static_cast<Eigen::Index>(i)) = std::stod(cols[i + 1], &used);
        if (used != cols[i + 1].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        fail(ErrorKind::parse, "embedding line " + std::to_string(line_no) + ": bad number '" + cols[i + 1] + "'");
      }
    }
    if (!v.allFinite()) fail(ErrorKind::parse, "embedding line " + std::to_string(line_no) + ": non-finite value");
    table.add(cols[0], std::move(v));
  }
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path) {
  std::istringstream in(read_file(path));
  return load_embeddings(in);
}

/// Mean vector of the in-vocabulary, non-stopword tokens; zero if none remain.
/// Tokens are summed in sorted order so the result ignores token order exactly.
inline Vector embed_description(std::string_view text, const EmbeddingTable& table) {
  std::vector<std::string> kept;
  for (auto& tok : tokenize(text)) {
    if (table.stopwords.count(tok)) continue;
    if (!table.entries.count(tok)) continue;
    kept.push_back(std::move(tok));
  }
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(kEmbeddingDim));
  if (kept.empty()) return sum;
  std::sort(kept.begin(), kept.end());
  for (const auto& tok : kept) sum += table.entries.at(tok);
  return sum / static_cast<double>(kept.size());
}

}  // namespace pintent
