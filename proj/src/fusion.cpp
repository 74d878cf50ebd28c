#include "pcr/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "pcr/error.hpp"

namespace pcr {

RankedList rrf_fuse(std::span<const RankedList> lists, const RrfConfig& config) {
  if (lists.empty()) throw ValidationError("rrf: no input lists");
  if (!(config.k_const > 0.0) || !std::isfinite(config.k_const)) {
    throw ValidationError("rrf: k must be > 0");
  }
  const std::string& query_id = lists.front().query_id;
  for (const auto& l : lists) {
    if (l.query_id != query_id) {
      throw ValidationError("rrf: mismatched query ids '" + query_id + "' and '" + l.query_id + "'");
    }
  }

  std::map<std::string, std::vector<double>> contributions;
  for (const auto& l : lists) {
    for (const auto& e : l.entries) {
      contributions[e.doc_id].push_back(1.0 / (static_cast<double>(e.rank) + config.k_const));
    }
  }

  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(contributions.size());
  for (auto& [doc, parts] : contributions) {
    // Summing in a canonical order keeps the result independent of list order.
    std::sort(parts.begin(), parts.end());
    double sum = 0.0;
    for (double p : parts) sum += p;
    scored.emplace_back(doc, sum);
  }
  return RankedList::from_scores(query_id, ListSource::kRrf, std::move(scored));
}

}  // namespace pcr
