// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "specsv/nsa/attention.hpp"
#include "specsv/nsa/cache.hpp"
#include "specsv/nsa/config.hpp"
#include "specsv/nsa/types.hpp"
#include "specsv/verify/grouping.hpp"

namespace specsv::verify {

// One query of a group at one layer. `q` holds n_q_heads * d_head floats;
// `gates` one entry per query head. `routing_bound` is the token-level
// visibility of the compressed and selected branches (the engine passes
// the lagged routing view; tests may pass anything <= committed rows).
struct MemberQuery {
  const float* q = nullptr;
  int64_t pos = 0;
  int64_t routing_bound = 0;
  const nsa::SelectedIndexSet* indices = nullptr;  // owned per-query set (exact mode)
  std::span<const nsa::GateVector> gates;
  nsa::TreeRowsView intra;  // window-branch draft rows; scratch may be null
};

struct GroupAttendContext {
  const nsa::LayerKv* kv = nullptr;
  const nsa::CompressedLayer* cc = nullptr;
  const nsa::NsaConfig* cfg = nullptr;
};

struct MemberResult {
  std::vector<nsa::BranchPartial> cmp, slc, win;  // per query head
  std::vector<double> out;                        // n_q_heads * d_head, gated combine
};

struct GroupResult {
  std::vector<MemberResult> members;
  LoadStats stats;
};

// Exact merged-schedule variant: loads the deduplicated union of the
// members' selected blocks and restores per-query semantics through
// ownership masking. Element-wise equal to independent per-query
// execution. Requires every member to carry its own index set.
GroupResult group_attend_exact(const GroupAttendContext& ctx,
                               std::span<const MemberQuery> members);

// Representative for the approximate variant: largest position, ties going
// to the later member in traversal order.
int64_t representative_index(std::span<const MemberQuery> members);

// Approximate shared-index variant: the representative's selected blocks
// are applied to every member (tokens clamped to each member's routing
// bound, no ownership masking); the window branch stays per-row exact.
// Only the representative needs `indices`.
GroupResult group_attend_approx(const GroupAttendContext& ctx,
                                std::span<const MemberQuery> members);

// Single-query path shared by both variants and by independent execution.
MemberResult attend_one(const GroupAttendContext& ctx, const MemberQuery& m,
                        std::span<const int64_t> blocks, const std::vector<bool>* ownership);

}  // namespace specsv::verify
