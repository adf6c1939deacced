// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace specsv::nsa {

// Selected raw-block ids for one (query, layer), strictly ascending.
// Block b covers tokens [b * l_sel, (b + 1) * l_sel). `forced` flags the
// mandatory initial/local blocks, parallel to `indices`.
struct SelectedIndexSet {
  int64_t query_id = 0;
  int64_t layer_id = 0;
  std::vector<int64_t> indices;
  std::vector<bool> forced;

  bool contains(int64_t block) const {
    for (int64_t b : indices)
      if (b == block) return true;
    return false;
  }
};

// Online-softmax state of one branch for one query head.
// Empty state: run_den == 0, out all zeros, run_max == -inf.
struct BranchPartial {
  std::vector<double> out;
  double run_max = -std::numeric_limits<double>::infinity();
  double run_den = 0.0;

  BranchPartial() = default;
  explicit BranchPartial(int64_t d_head) : out(static_cast<size_t>(d_head), 0.0) {}

  bool empty() const { return run_den == 0.0; }
};

// Per-query-head branch gates, each strictly in (0, 1).
struct GateVector {
  double g_cmp = 1.0;
  double g_slc = 1.0;
  double g_win = 1.0;
};

}  // namespace specsv::nsa
