#pragma once

#include <span>

#include "pcr/ranked_list.hpp"

namespace pcr {

struct RrfConfig {
  double k_const = 60.0;
};

/// Reciprocal Rank Fusion: each document scores the sum of 1 / (rank + k)
/// over the lists that contain it. Output is sorted by descending fused score,
/// ties by ascending doc id. Only ranks are read; input scores are ignored.
///
/// Throws ValidationError for an empty collection, mismatched query ids, or
/// a non-positive k.
RankedList rrf_fuse(std::span<const RankedList> lists, const RrfConfig& config = {});

}  // namespace pcr
