// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "specsv/nsa/types.hpp"

namespace specsv::verify {

// Contiguous slice [begin, end) of the flattened batch, size <= C.
struct QueryGroup {
  int64_t begin = 0;
  int64_t end = 0;
  int64_t size() const { return end - begin; }
};

// consecutive slices of size C; the final group may be smaller
std::vector<QueryGroup> partition_groups(int64_t n_queries, int64_t C);

// Deduplicated union of a group's selected-block sets with per-member
// ownership.
struct MergedSchedule {
  std::vector<int64_t> unique_blocks;        // strictly ascending
  std::vector<std::vector<bool>> ownership;  // [member][unique index]
};

MergedSchedule merged_schedule(std::span<const nsa::SelectedIndexSet> sets);

// KV-traffic and launch accounting for one (step, layer, group) unit.
struct LoadStats {
  int64_t unique_block_loads = 0;
  int64_t total_requested_loads = 0;
  int64_t dedup_savings = 0;
  std::vector<int64_t> pairwise_overlap;  // s per adjacent member pair
  int64_t window_token_loads = 0;
  int64_t launches = 0;
  int64_t index_constructions = 0;

  void add(const LoadStats& o) {
    unique_block_loads += o.unique_block_loads;
    total_requested_loads += o.total_requested_loads;
    dedup_savings += o.dedup_savings;
    pairwise_overlap.insert(pairwise_overlap.end(), o.pairwise_overlap.begin(),
                            o.pairwise_overlap.end());
    window_token_loads += o.window_token_loads;
    launches += o.launches;
    index_constructions += o.index_constructions;
  }
};

int64_t overlap_count(const nsa::SelectedIndexSet& a, const nsa::SelectedIndexSet& b);

}  // namespace specsv::verify
