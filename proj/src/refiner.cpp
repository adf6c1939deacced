// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/plan/refiner.hpp"

#include <stdexcept>

namespace specsv::plan {

double RefinerState::observed_throughput(int64_t rank) const {
  for (const Explored& e : explored) {
    if (e.rank == rank && e.steps > 0 && e.sum_latency > 0.0)
      return e.sum_accepted / e.sum_latency;
  }
  return 0.0;
}

namespace {

RefinerState::Explored& explored_slot(RefinerState& st, int64_t rank) {
  for (auto& e : st.explored)
    if (e.rank == rank) return e;
  st.explored.push_back(RefinerState::Explored{rank, 0.0, 0.0, 0});
  return st.explored.back();
}

}  // namespace

RefineDecision refine_step(RefinerState& st, const StepMetrics& m, const ProfileEntry& entry) {
  if (entry.candidates.empty()) throw std::invalid_argument("refine_step: empty profile entry");
  RefineDecision decision;
  decision.active_rank = st.active_rank;

  st.steps_seen += 1;
  auto& slot = explored_slot(st, st.active_rank);
  slot.sum_accepted += m.accepted;
  slot.sum_latency += m.latency;
  slot.steps += 1;

  if (st.settled) return decision;

  if (!st.ema_primed) {
    st.ema = m.accepted;
    st.ema_primed = true;
  } else {
    st.ema = st.consts.alpha * m.accepted + (1.0 - st.consts.alpha) * st.ema;
  }

  if (st.steps_seen <= st.consts.warmup) return decision;

  const double expected = entry.candidates[st.active_rank].exp_accepted;
  if (st.ema < st.consts.rho * expected) {
    st.below_count += 1;
  } else {
    st.below_count = 0;
  }
  if (st.below_count < st.consts.hysteresis) return decision;

  // sustained mismatch
  const int64_t next_rank = st.active_rank + 1;
  const bool can_advance = st.transitions < kMaxTransitions &&
                           next_rank < static_cast<int64_t>(entry.candidates.size());
  if (can_advance) {
    st.active_rank = next_rank;
    st.transitions += 1;
    st.ema_primed = false;
    st.below_count = 0;
    decision.switched = true;
    decision.active_rank = st.active_rank;
    return decision;
  }

  // out of transitions (or candidates): settle on the best explored
  int64_t best_rank = st.active_rank;
  double best_thr = -1.0;
  for (const auto& e : st.explored) {
    if (e.steps == 0 || e.sum_latency <= 0.0) continue;
    const double thr = e.sum_accepted / e.sum_latency;
    if (thr > best_thr || (thr == best_thr && e.rank < best_rank)) {
      best_thr = thr;
      best_rank = e.rank;
    }
  }
  st.settled = true;
  st.below_count = 0;
  decision.settled_now = true;
  decision.switched = best_rank != st.active_rank;
  st.active_rank = best_rank;
  decision.active_rank = best_rank;
  return decision;
}

}  // namespace specsv::plan
