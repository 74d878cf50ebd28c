#include "pcr/ranked_list.hpp"

#include <algorithm>
#include <unordered_set>

#include "pcr/error.hpp"

namespace pcr {

std::string_view to_string(ListSource source) noexcept {
  switch (source) {
    case ListSource::kVector: return "vector";
    case ListSource::kBm25: return "bm25";
    case ListSource::kRrf: return "rrf";
    case ListSource::kRerank: return "rerank";
  }
  return "unknown";
}

ListSource parse_list_source(std::string_view name) {
  if (name == "vector") return ListSource::kVector;
  if (name == "bm25") return ListSource::kBm25;
  if (name == "rrf") return ListSource::kRrf;
  if (name == "rerank") return ListSource::kRerank;
  throw ValidationError("unknown list source '" + std::string(name) + "'");
}

std::vector<std::string> RankedList::doc_ids() const {
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.doc_id);
  return ids;
}

RankedList RankedList::from_scores(std::string query_id, ListSource source,
                                   std::vector<std::pair<std::string, double>> scored) {
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  RankedList list{std::move(query_id), source, {}};
  list.entries.reserve(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    list.entries.push_back({std::move(scored[i].first), i + 1, scored[i].second});
  }
  return list;
}

void RankedList::validate() const {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.rank != i + 1) {
      throw ValidationError("ranked list for '" + query_id + "': rank gap at position " +
                            std::to_string(i + 1));
    }
    if (!seen.insert(e.doc_id).second) {
      throw ValidationError("ranked list for '" + query_id + "': duplicate doc '" + e.doc_id + "'");
    }
    if (i > 0 && e.score > entries[i - 1].score) {
      throw ValidationError("ranked list for '" + query_id + "': score increases at rank " +
                            std::to_string(e.rank));
    }
  }
}

void RankedList::remove(std::string_view doc_id) {
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const RankedEntry& e) { return e.doc_id == doc_id; });
  if (it == entries.end()) return;
  entries.erase(it);
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].rank = i + 1;
}

void RankedList::truncate(std::size_t n) {
  if (entries.size() > n) entries.resize(n);
}

}  // namespace pcr
