// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/verify/group_attend.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace specsv::verify {

std::vector<QueryGroup> partition_groups(int64_t n_queries, int64_t C) {
  if (C < 1) throw std::invalid_argument("partition_groups: C must be >= 1");
  std::vector<QueryGroup> groups;
  for (int64_t b = 0; b < n_queries; b += C) {
    groups.push_back(QueryGroup{b, std::min(b + C, n_queries)});
  }
  return groups;
}

MergedSchedule merged_schedule(std::span<const nsa::SelectedIndexSet> sets) {
  MergedSchedule sched;
  std::vector<int64_t> all;
  for (const auto& s : sets) all.insert(all.end(), s.indices.begin(), s.indices.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  sched.unique_blocks = std::move(all);

  sched.ownership.resize(sets.size());
  for (size_t m = 0; m < sets.size(); ++m) {
    auto& row = sched.ownership[m];
    row.assign(sched.unique_blocks.size(), false);
    size_t j = 0;
    for (int64_t b : sets[m].indices) {
      while (sched.unique_blocks[j] < b) ++j;
      assert(sched.unique_blocks[j] == b);
      row[j] = true;
    }
  }
  return sched;
}

int64_t overlap_count(const nsa::SelectedIndexSet& a, const nsa::SelectedIndexSet& b) {
  int64_t s = 0;
  size_t i = 0, j = 0;
  while (i < a.indices.size() && j < b.indices.size()) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (a.indices[i] > b.indices[j]) {
      ++j;
    } else {
      ++s;
      ++i;
      ++j;
    }
  }
  return s;
}

MemberResult attend_one(const GroupAttendContext& ctx, const MemberQuery& m,
                        std::span<const int64_t> blocks, const std::vector<bool>* ownership) {
  const nsa::NsaConfig& cfg = *ctx.cfg;
  MemberResult res;
  res.cmp = nsa::branch_attend_compressed(m.q, *ctx.cc, m.routing_bound, cfg);
  res.slc = nsa::branch_attend_selected(m.q, *ctx.kv, blocks, ownership, m.routing_bound, cfg);
  res.win = nsa::branch_attend_window(m.q, *ctx.kv, m.pos, cfg.w, ctx.kv->rows,
                                      m.intra.scratch != nullptr ? &m.intra : nullptr, cfg);
  res.out.resize(static_cast<size_t>(cfg.n_q_heads * cfg.d_head));
  for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
    auto head = nsa::gated_combine(res.cmp[h], res.slc[h], res.win[h], m.gates[h]);
    std::copy(head.begin(), head.end(), res.out.begin() + h * cfg.d_head);
  }
  return res;
}

namespace {

int64_t window_rows_attended(const MemberQuery& m, int64_t committed_rows, int64_t w) {
  const int64_t lo = std::max<int64_t>(0, m.pos - w + 1);
  const int64_t hi = std::min(m.pos, committed_rows - 1);
  int64_t rows = hi >= lo ? hi - lo + 1 : 0;
  rows += static_cast<int64_t>(m.intra.admitted.size());
  return rows;
}

}  // namespace

GroupResult group_attend_exact(const GroupAttendContext& ctx,
                               std::span<const MemberQuery> members) {
  GroupResult res;
  std::vector<nsa::SelectedIndexSet> sets;
  sets.reserve(members.size());
  for (const auto& m : members) {
    if (m.indices == nullptr)
      throw std::invalid_argument("group_attend_exact: member without index set");
    sets.push_back(*m.indices);
  }
  const MergedSchedule sched = merged_schedule(sets);

  for (size_t i = 0; i < members.size(); ++i) {
    res.members.push_back(
        attend_one(ctx, members[i], sched.unique_blocks, &sched.ownership[i]));
    res.stats.total_requested_loads += static_cast<int64_t>(sets[i].indices.size());
    res.stats.window_token_loads += window_rows_attended(members[i], ctx.kv->rows, ctx.cfg->w);
    if (i > 0) res.stats.pairwise_overlap.push_back(overlap_count(sets[i - 1], sets[i]));
  }
  res.stats.unique_block_loads = static_cast<int64_t>(sched.unique_blocks.size());
  res.stats.dedup_savings = res.stats.total_requested_loads - res.stats.unique_block_loads;
  res.stats.index_constructions = static_cast<int64_t>(members.size());
  return res;
}

int64_t representative_index(std::span<const MemberQuery> members) {
  if (members.empty()) throw std::invalid_argument("representative_index: empty group");
  int64_t rep = 0;
  for (size_t i = 1; i < members.size(); ++i) {
    if (members[i].pos >= members[rep].pos) rep = static_cast<int64_t>(i);
  }
  return rep;
}

GroupResult group_attend_approx(const GroupAttendContext& ctx,
                                std::span<const MemberQuery> members) {
  GroupResult res;
  const int64_t rep = representative_index(members);
  if (members[rep].indices == nullptr)
    throw std::invalid_argument("group_attend_approx: representative without index set");
  const auto& shared = members[rep].indices->indices;

  for (size_t i = 0; i < members.size(); ++i) {
    res.members.push_back(attend_one(ctx, members[i], shared, nullptr));
    res.stats.window_token_loads += window_rows_attended(members[i], ctx.kv->rows, ctx.cfg->w);
  }
  res.stats.unique_block_loads = static_cast<int64_t>(shared.size());
  res.stats.total_requested_loads =
      static_cast<int64_t>(shared.size()) * static_cast<int64_t>(members.size());
  res.stats.dedup_savings = res.stats.total_requested_loads - res.stats.unique_block_loads;
  res.stats.index_constructions = 1;
  return res;
}

}  // namespace specsv::verify
