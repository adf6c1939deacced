// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/schedule/layer_roles.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace specsv::schedule {

LayerRolePlan resolve_layer_roles(std::span<const int64_t> reuse_set, int64_t n_layers) {
  if (n_layers < 1) throw std::invalid_argument("resolve_layer_roles: need at least one layer");
  LayerRolePlan plan;
  plan.n_layers = n_layers;
  plan.reuse_set.assign(reuse_set.begin(), reuse_set.end());
  std::sort(plan.reuse_set.begin(), plan.reuse_set.end());
  plan.reuse_set.erase(std::unique(plan.reuse_set.begin(), plan.reuse_set.end()),
                       plan.reuse_set.end());
  for (int64_t id : plan.reuse_set) {
    if (id == 0) throw std::invalid_argument("resolve_layer_roles: layer 0 must refresh");
    if (id < 0 || id >= n_layers)
      throw std::invalid_argument("resolve_layer_roles: layer id out of range");
  }

  plan.roles.assign(n_layers, LayerRole::Refresh);
  for (int64_t id : plan.reuse_set) plan.roles[id] = LayerRole::Reuse;

  plan.source.resize(n_layers);
  int64_t last_refresh = 0;
  for (int64_t j = 0; j < n_layers; ++j) {
    if (plan.roles[j] == LayerRole::Refresh) last_refresh = j;
    plan.source[j] = plan.roles[j] == LayerRole::Refresh ? j : last_refresh;
  }
  return plan;
}

ClampedIndices clamp_inherited_indices(const nsa::SelectedIndexSet& source, int64_t causal_bound,
                                       const nsa::NsaConfig& cfg) {
  ClampedIndices out;
  out.token_bound = causal_bound;
  out.indices.query_id = source.query_id;
  out.indices.layer_id = source.layer_id;
  for (size_t i = 0; i < source.indices.size(); ++i) {
    const int64_t b = source.indices[i];
    if (b * cfg.l_sel >= causal_bound) continue;  // fully beyond the bound
    out.indices.indices.push_back(b);
    out.indices.forced.push_back(source.forced.empty() ? false : source.forced[i]);
  }
  return out;
}

std::vector<int64_t> parse_reuse_schedule(const std::string& text, int64_t n_layers) {
  if (text.empty() || text == "none") return {};
  std::vector<int64_t> ids;
  if (text == "alt") {
    for (int64_t j = 1; j < n_layers; j += 2) ids.push_back(j);
    return ids;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    size_t used = 0;
    const int64_t v = std::stoll(item, &used);
    if (used != item.size())
      throw std::invalid_argument("parse_reuse_schedule: bad layer id '" + item + "'");
    ids.push_back(v);
  }
  return ids;
}

std::string schedule_to_string(std::span<const int64_t> reuse_set) {
  if (reuse_set.empty()) return "none";
  std::string s;
  for (size_t i = 0; i < reuse_set.size(); ++i) {
    if (i > 0) s += ',';
    s += std::to_string(reuse_set[i]);
  }
  return s;
}

CalibrationResult greedy_reuse_calibration(
    int64_t n_layers, double tolerance,
    const std::function<double(std::span<const int64_t>)>& deviation_of) {
  CalibrationResult res;
  std::vector<bool> in_set(n_layers, false);
  for (;;) {
    int64_t best = -1;
    double best_dev = 0.0;
    for (int64_t cand = 1; cand < n_layers; ++cand) {
      if (in_set[cand]) continue;
      std::vector<int64_t> trial = res.reuse_set;
      trial.push_back(cand);
      std::sort(trial.begin(), trial.end());
      const double dev = deviation_of(trial);
      if (best == -1 || dev < best_dev) {
        best = cand;
        best_dev = dev;
      }
    }
    if (best == -1 || best_dev > tolerance) break;
    in_set[best] = true;
    res.reuse_set.push_back(best);
    std::sort(res.reuse_set.begin(), res.reuse_set.end());
    res.deviation_trace.push_back(best_dev);
  }
  return res;
}

}  // namespace specsv::schedule
