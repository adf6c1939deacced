// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "specsv/nsa/config.hpp"
#include "specsv/nsa/types.hpp"

namespace specsv::schedule {

enum class LayerRole { Refresh, Reuse };

// Modeled launch counts per layer: a refresh layer runs a routing launch
// plus one fused downstream launch; a reuse layer runs a single fully
// fused launch; the unfused baseline runs five (routing, compressed,
// selected, window, aggregation). Accounting only — nothing is fused on
// CPU, the counters feed the cost model.
inline constexpr int64_t kRefreshLaunches = 2;
inline constexpr int64_t kReuseLaunches = 1;
inline constexpr int64_t kVanillaLaunches = 5;

// Refresh/reuse role of every layer plus each reuse layer's index source.
struct LayerRolePlan {
  int64_t n_layers = 0;
  std::vector<int64_t> reuse_set;    // S, ascending
  std::vector<LayerRole> roles;      // per layer
  std::vector<int64_t> source;       // per layer; nearest preceding refresh (self for refresh)

  bool is_reuse(int64_t layer) const { return roles[layer] == LayerRole::Reuse; }
  int64_t refresh_count() const { return n_layers - static_cast<int64_t>(reuse_set.size()); }
  int64_t launches_per_step() const {
    return kRefreshLaunches * refresh_count() +
           kReuseLaunches * static_cast<int64_t>(reuse_set.size());
  }
  int64_t layer_launches(int64_t layer) const {
    return is_reuse(layer) ? kReuseLaunches : kRefreshLaunches;
  }
};

// S must be a subset of {1..L-1}; layer 0 is always refresh.
LayerRolePlan resolve_layer_roles(std::span<const int64_t> reuse_set, int64_t n_layers);

// Inherited indices interpreted under a member's causal bound: blocks
// entirely at or beyond `causal_bound` are dropped; a boundary block stays
// with its tokens past the bound masked; forced flags carry over.
struct ClampedIndices {
  nsa::SelectedIndexSet indices;
  int64_t token_bound = 0;  // tokens at or beyond this are masked
};

ClampedIndices clamp_inherited_indices(const nsa::SelectedIndexSet& source, int64_t causal_bound,
                                       const nsa::NsaConfig& cfg);

// "none", "alt" (= {1,3,5,...}) or a comma-separated id list.
std::vector<int64_t> parse_reuse_schedule(const std::string& text, int64_t n_layers);
std::string schedule_to_string(std::span<const int64_t> reuse_set);

// Greedy reuse-schedule search over a deviation functional. Repeatedly
// converts the layer whose reuse least increases `deviation_of` (mean
// per-token output deviation vs all-refresh), while the minimum stays
// within `tolerance`. Layer 0 is never a candidate. Returns the schedule
// and the deviation trace, one entry per accepted layer.
struct CalibrationResult {
  std::vector<int64_t> reuse_set;
  std::vector<double> deviation_trace;
};

CalibrationResult greedy_reuse_calibration(
    int64_t n_layers, double tolerance,
    const std::function<double(std::span<const int64_t>)>& deviation_of);

}  // namespace specsv::schedule
