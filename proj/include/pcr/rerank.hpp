#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcr/lexical.hpp"
#include "pcr/ranked_list.hpp"

namespace pcr {

class Corpus;
struct RoleQuery;

enum class Aggregation { kWeightedMean, kMax, kMean };

std::string_view to_string(Aggregation mode) noexcept;
Aggregation parse_aggregation(std::string_view name);

struct ChunkingConfig {
  std::size_t max_chars = 2000;
  std::size_t overlap_chars = 200;
  Aggregation aggregation = Aggregation::kWeightedMean;
  std::size_t rerank_depth = 100;

  /// Throws ValidationError unless 0 <= overlap < max_chars.
  void validate() const;
};

struct Chunk {
  std::size_t offset = 0;  // in code points
  std::size_t length = 0;  // in code points
  std::string text;
};

/// Chunk i starts at i * (max_chars - overlap_chars) code points; the last
/// chunk is the first one reaching the end of the text. Empty text yields no chunks.
std::vector<Chunk> chunk_document(std::string_view text, const ChunkingConfig& config);

struct ChunkScore {
  double score = 0.0;
  std::size_t length = 0;
};

/// weighted_mean weights by chunk length. Throws ValidationError when empty.
double aggregate_scores(std::span<const ChunkScore> chunks, Aggregation mode);

/// Scores (query, passage) pairs. Implementations must be deterministic.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual std::string name() const = 0;
  /// One score per passage, in order.
  virtual std::vector<double> score(std::string_view query,
                                    std::span<const std::string> passages) const = 0;
  /// Longest passage the backing model accepts, in characters; 0 = unlimited.
  virtual std::size_t max_passage_chars() const { return 0; }
};

/// Token-set Jaccard similarity; 0 when both sides have no tokens.
double jaccard_similarity(std::string_view a, std::string_view b, const Bm25Config& tokenizer = {});

class JaccardPairScorer final : public PairScorer {
 public:
  explicit JaccardPairScorer(Bm25Config tokenizer = {}) : tokenizer_(std::move(tokenizer)) {}

  std::string name() const override { return "jaccard"; }
  std::vector<double> score(std::string_view query,
                            std::span<const std::string> passages) const override;

 private:
  Bm25Config tokenizer_;
};

struct RerankReport {
  bool query_truncated = false;
  std::size_t rescored = 0;
};

/// Re-scores the top `rerank_depth` fused entries (chunk, score, aggregate)
/// and sorts them by descending score, ties by doc id. Deeper entries keep
/// their fused order after the re-scored block; their scores are shifted to
/// sit below the block (block minimum - 1, - 2, ...) so scores stay
/// non-increasing. rerank_depth = 0 returns the fused list unchanged apart
/// from the source tag.
RankedList rerank(const RoleQuery& query, const RankedList& fused, const PairScorer& scorer,
                  const ChunkingConfig& config, const Corpus& corpus,
                  RerankReport* report = nullptr);

}  // namespace pcr
