#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pcr/ranked_list.hpp"

namespace pcr {

class Corpus;

struct Bm25Config {
  double k1 = 1.2;
  double b = 0.75;
  bool lowercase = true;
  std::set<std::string> stopwords;

  /// SHA-256 of the sorted stopword list; recorded in index headers.
  std::string stopword_hash() const;
  /// Throws ValidationError when k1 < 0 or b is outside [0, 1].
  void validate() const;
};

/// Maximal runs of ASCII letters/digits (bytes >= 0x80 count as letters so
/// multi-byte words stay whole), lowercased and stopword-filtered per config.
std::vector<std::string> tokenize(std::string_view text, const Bm25Config& config = {});

struct Posting {
  std::uint32_t doc = 0;  // ordinal into the index's sorted doc id table
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

/// Token -> postings over documents ordered by ascending doc id.
class InvertedIndex {
 public:
  struct Source {
    std::string doc_id;
    std::string text;
  };

  InvertedIndex() = default;

  static InvertedIndex build(std::vector<Source> documents, const Bm25Config& config);

  std::size_t n_docs() const noexcept { return doc_ids_.size(); }
  double avg_doc_length() const noexcept { return avg_doc_length_; }
  std::size_t vocabulary_size() const noexcept { return postings_.size(); }
  const Bm25Config& config() const noexcept { return config_; }

  std::optional<std::uint32_t> ordinal(std::string_view doc_id) const;
  const std::string& doc_id(std::uint32_t ordinal) const { return doc_ids_.at(ordinal); }
  std::uint32_t doc_length(std::uint32_t ordinal) const { return doc_lengths_.at(ordinal); }
  std::span<const std::string> doc_ids() const noexcept { return doc_ids_; }

  /// Empty span for unknown tokens.
  std::span<const Posting> postings(std::string_view token) const;
  std::size_t document_frequency(std::string_view token) const { return postings(token).size(); }

  /// All indexed tokens, ascending.
  std::vector<std::string> tokens() const;

  void save(std::ostream& out) const;
  /// Rejects files whose header config differs from `expected`.
  static InvertedIndex load(std::istream& in, const Bm25Config& expected);

 private:
  Bm25Config config_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::uint32_t> ordinals_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_doc_length_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Indexes each document's raw_text.
InvertedIndex build_index(const Corpus& corpus, const Bm25Config& config);

/// ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
double bm25_idf(std::size_t n_docs, std::size_t df);

/// Okapi BM25 over the distinct query tokens using corpus-global N, df and
/// avgdl. Throws ValidationError for unknown doc ids.
double bm25_score(std::span<const std::string> query, std::string_view doc_id,
                  const InvertedIndex& index, const Bm25Config& config);

/// Ranks exactly `candidates` (descending score, ties by ascending doc id).
/// Scores equal the full-corpus scores of the same documents.
RankedList score_candidates(std::string query_id, std::span<const std::string> query,
                            std::span<const std::string> candidates, const InvertedIndex& index,
                            const Bm25Config& config);

/// Full-corpus BM25 ranking cut to `top_k` entries.
RankedList search_bm25(std::string query_id, std::span<const std::string> query,
                       const InvertedIndex& index, const Bm25Config& config, std::size_t top_k);

}  // namespace pcr
