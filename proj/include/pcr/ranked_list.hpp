#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pcr {

/// Which stage produced a ranked list.
enum class ListSource { kVector, kBm25, kRrf, kRerank };

std::string_view to_string(ListSource source) noexcept;
ListSource parse_list_source(std::string_view name);

struct RankedEntry {
  std::string doc_id;
  std::size_t rank = 0;  // 1-based
  double score = 0.0;

  bool operator==(const RankedEntry&) const = default;
};

/// Ordered retrieval output for one query.
///
/// Invariants: ranks are 1..n without gaps, doc ids are unique, scores are
/// non-increasing with rank. Every stage uses descending scores; the vector
/// stage stores score = -L2 distance.
struct RankedList {
  std::string query_id;
  ListSource source = ListSource::kVector;
  std::vector<RankedEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }

  std::vector<std::string> doc_ids() const;

  /// Sorts by descending score, ties by ascending doc id, and assigns ranks.
  static RankedList from_scores(std::string query_id, ListSource source,
                                std::vector<std::pair<std::string, double>> scored);

  /// Throws ValidationError when an invariant does not hold.
  void validate() const;

  /// Drops `doc_id` (if present) and renumbers ranks.
  void remove(std::string_view doc_id);

  /// Keeps the first `n` entries.
  void truncate(std::size_t n);

  bool operator==(const RankedList&) const = default;
};

}  // namespace pcr
