// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specsv/cost/cost_model.hpp"
#include "specsv/model/toy_model.hpp"
#include "specsv/nsa/attention.hpp"
#include "specsv/nsa/cache.hpp"
#include "specsv/plan/profile.hpp"
#include "specsv/plan/refiner.hpp"
#include "specsv/plan/strategy.hpp"
#include "specsv/schedule/layer_roles.hpp"
#include "specsv/tree/draft_tree.hpp"
#include "specsv/verify/group_attend.hpp"

namespace specsv::engine {

struct TraceOptions {
  bool record_indices = false;    // effective selected indices per (layer, query)
  bool record_logits = false;     // per-query logits of the verification pass
  bool report_deviation = false;  // approx-vs-exact selected-branch deviation
};

struct StepTrace {
  // [layer][query]; query 0 is the root, then flat order
  std::vector<std::vector<nsa::SelectedIndexSet>> indices;
  std::vector<std::vector<float>> logits;  // [query][vocab]
  double selected_dev_mean = 0.0;
  double selected_dev_max = 0.0;
};

struct StepOutcome {
  int64_t gamma = 0;
  int64_t accepted = 0;            // A_t, bonus included
  std::vector<int32_t> committed;  // tokens committed by this step
  double wall_seconds = 0.0;
  double modeled_latency = 0.0;
  cost::StepAccounting accounting;
  std::vector<verify::LoadStats> per_layer;  // group-summed, draft queries only
};

// One request's state: the committed token sequence plus both models'
// caches. Rows exist for every committed token except the newest (the
// pending root); each step computes the root's rows, verifies the draft
// tree against it, and commits the accepted path plus the bonus token.
class Engine {
 public:
  Engine(const model::ToyModelSpec& target_spec, const model::ToyModelSpec& draft_spec);

  void reset();
  void prefill(std::span<const int32_t> prompt);

  const std::vector<int32_t>& tokens() const { return tokens_; }
  int64_t context_len() const { return static_cast<int64_t>(tokens_.size()); }
  const model::ToyModel& target() const { return target_.model; }
  model::ToyModel& mutable_target() { return target_.model; }  // calibration fixtures
  const cost::CostCoeffs& coeffs() const { return coeffs_; }
  void set_coeffs(const cost::CostCoeffs& c) { coeffs_ = c; }

  // One verification step. `autoregressive` runs the root-only pass (the
  // draft model is not consulted). Throws on context overflow, on
  // depth > routing_lag, and on strategy/plan mismatches.
  StepOutcome step(const plan::StrategyTuple& strategy, bool autoregressive,
                   const TraceOptions* topts = nullptr, StepTrace* trace = nullptr);

  // Teacher-forced evaluation for schedule calibration: commits `forced`
  // tokens one at a time under `plan`, returning each token's final-layer
  // hidden state (computed before the commit).
  std::vector<std::vector<float>> forced_hidden_states(std::span<const int32_t> forced,
                                                       const schedule::LayerRolePlan& plan);

 private:
  struct Side {
    model::ToyModel model;
    nsa::KvCache cache;
    std::vector<nsa::CompressedLayer> cc;
  };

  struct DraftExpansion;
  tree::DraftTree expand_tree(const plan::StrategyTuple& strategy);
  void commit_draft_rows(std::span<const int32_t> accepted_tokens);

  Side target_;
  Side draft_;
  std::vector<int32_t> tokens_;
  cost::CostCoeffs coeffs_;
};

// --- decode loops -----------------------------------------------------

enum class TimeBase { Wall, Modeled };

struct DecodeOptions {
  int64_t steps = 64;  // tokens to generate
  plan::StrategyTuple strategy;
  std::optional<plan::PrecisionClass> cls;
  TimeBase time_base = TimeBase::Modeled;
  // profile-guided refinement
  const plan::ProfileTable* profile = nullptr;
  bool strategy_from_profile = false;  // start from the preselected candidate
  bool refine = false;
  bool guard_bookkeeping = false;  // track guard state even when not refining
  int64_t early_window = plan::kDefaultEarlyWindow;
  TraceOptions trace_options;
};

struct DecodeResult {
  std::vector<int32_t> generated;  // exactly `steps` tokens
  std::vector<int32_t> committed;  // full committed output (may overshoot)
  std::vector<plan::StepMetrics> metrics;
  std::vector<StepOutcome> outcomes;
  std::vector<StepTrace> traces;  // when trace options set
  int64_t refine_events = 0;
  int64_t settle_events = 0;
  std::vector<std::string> strategy_log;  // one entry per strategy change
  double throughput() const;              // sum A / sum T
};

std::vector<int32_t> decode_autoregressive(Engine& engine, std::span<const int32_t> prompt,
                                           int64_t steps);

DecodeResult decode_speculative(Engine& engine, std::span<const int32_t> prompt,
                                const DecodeOptions& opts);

// Simplified greedy reuse-schedule calibration: converts layers to reuse
// while the mean relative L2 deviation of teacher-forced final hidden
// states (vs all-refresh) stays within `tolerance`.
schedule::CalibrationResult calibrate_reuse_schedule(Engine& engine,
                                                     std::span<const std::vector<int32_t>> prompts,
                                                     int64_t forced_tokens, double tolerance);

// Synthetic byte-level prompt.
std::vector<int32_t> synthetic_prompt(uint64_t seed, int64_t length);

}  // namespace specsv::engine
