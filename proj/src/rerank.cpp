#include "pcr/rerank.hpp"

#include <algorithm>
#include <unordered_set>

#include "pcr/corpus.hpp"
#include "pcr/error.hpp"
#include "pcr/segmenter.hpp"
#include "pcr/text.hpp"

namespace pcr {

std::string_view to_string(Aggregation mode) noexcept {
  switch (mode) {
    case Aggregation::kWeightedMean: return "weighted_mean";
    case Aggregation::kMax: return "max";
    case Aggregation::kMean: return "mean";
  }
  return "weighted_mean";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "weighted_mean") return Aggregation::kWeightedMean;
  if (name == "max") return Aggregation::kMax;
  if (name == "mean") return Aggregation::kMean;
  throw ValidationError("unknown aggregation '" + std::string(name) + "'");
}

void ChunkingConfig::validate() const {
  if (max_chars == 0) throw ValidationError("chunk max_chars must be > 0");
  if (overlap_chars >= max_chars) throw ValidationError("chunk overlap must be < max_chars");
}

std::vector<Chunk> chunk_document(std::string_view text, const ChunkingConfig& config) {
  config.validate();
  const auto offsets = text::char_offsets(text);
  const std::size_t n_chars = offsets.size() - 1;
  const std::size_t step = config.max_chars - config.overlap_chars;
  std::vector<Chunk> chunks;
  for (std::size_t start = 0; start < n_chars; start += step) {
    const std::size_t end = std::min(start + config.max_chars, n_chars);
    chunks.push_back({start, end - start,
                      std::string(text.substr(offsets[start], offsets[end] - offsets[start]))});
    if (end == n_chars) break;
  }
  return chunks;
}

double aggregate_scores(std::span<const ChunkScore> chunks, Aggregation mode) {
  if (chunks.empty()) throw ValidationError("cannot aggregate zero chunk scores");
  switch (mode) {
    case Aggregation::kMax: {
      double best = chunks.front().score;
      for (const auto& c : chunks) best = std::max(best, c.score);
      return best;
    }
    case Aggregation::kWeightedMean: {
      double num = 0.0, den = 0.0;
      for (const auto& c : chunks) {
        num += c.score * static_cast<double>(c.length);
        den += static_cast<double>(c.length);
      }
      if (den > 0.0) return num / den;
      [[fallthrough]];
    }
    case Aggregation::kMean: {
      double sum = 0.0;
      for (const auto& c : chunks) sum += c.score;
      return sum / static_cast<double>(chunks.size());
    }
  }
  return 0.0;
}

double jaccard_similarity(std::string_view a, std::string_view b, const Bm25Config& tokenizer) {
  const auto ta = tokenize(a, tokenizer);
  const auto tb = tokenize(b, tokenizer);
  std::unordered_set<std::string_view> sa(ta.begin(), ta.end());
  std::unordered_set<std::string_view> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

std::vector<double> JaccardPairScorer::score(std::string_view query,
                                             std::span<const std::string> passages) const {
  std::vector<double> out;
  out.reserve(passages.size());
  for (const auto& p : passages) out.push_back(jaccard_similarity(query, p, tokenizer_));
  return out;
}

RankedList rerank(const RoleQuery& query, const RankedList& fused, const PairScorer& scorer,
                  const ChunkingConfig& config, const Corpus& corpus, RerankReport* report) {
  config.validate();
  if (fused.empty()) throw ValidationError("rerank: fused list for '" + fused.query_id + "' is empty");

  ChunkingConfig chunking = config;
  if (const auto limit = scorer.max_passage_chars(); limit > 0 && limit < chunking.max_chars) {
    chunking.max_chars = limit;
    chunking.overlap_chars = std::min(chunking.overlap_chars, limit / 2);
  }

  RerankReport local;
  std::string query_text = query.text;
  if (text::char_count(query_text) > chunking.max_chars) {
    query_text = text::truncate_chars(query_text, chunking.max_chars);
    local.query_truncated = true;
  }

  const std::size_t depth = std::min(config.rerank_depth, fused.size());
  std::vector<std::pair<std::string, double>> rescored;
  rescored.reserve(depth);
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& doc_id = fused.entries[i].doc_id;
    const auto chunks = chunk_document(corpus.at(doc_id).raw_text, chunking);
    double score = 0.0;
    if (!chunks.empty()) {
      std::vector<std::string> passages;
      passages.reserve(chunks.size());
      for (const auto& c : chunks) passages.push_back(c.text);
      const auto scores = scorer.score(query_text, passages);
      if (scores.size() != chunks.size()) {
        throw TransportError("pair scorer returned " + std::to_string(scores.size()) +
                             " scores for " + std::to_string(chunks.size()) + " chunks");
      }
      std::vector<ChunkScore> parts;
      parts.reserve(chunks.size());
      for (std::size_t c = 0; c < chunks.size(); ++c) parts.push_back({scores[c], chunks[c].length});
      score = aggregate_scores(parts, chunking.aggregation);
    }
    rescored.emplace_back(doc_id, score);
  }
  local.rescored = depth;
  if (report) *report = local;

  if (depth == 0) {
    RankedList out = fused;
    out.source = ListSource::kRerank;
    return out;
  }

  RankedList out = RankedList::from_scores(fused.query_id, ListSource::kRerank, std::move(rescored));
  const double floor = out.entries.back().score;
  for (std::size_t i = depth; i < fused.size(); ++i) {
    out.entries.push_back({fused.entries[i].doc_id, i + 1,
                           floor - static_cast<double>(i - depth + 1)});
  }
  return out;
}

}  // namespace pcr
