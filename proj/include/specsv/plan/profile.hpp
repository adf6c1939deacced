// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "specsv/cost/cost_model.hpp"
#include "specsv/plan/strategy.hpp"

namespace specsv::plan {

inline constexpr int kNumBuckets = 4;
inline constexpr int64_t kBucketWidth = 4096;
inline constexpr int kCandidatesPerEntry = 12;

// Context-length regime: [0,4K) [4K,8K) [8K,12K) [12K,16K]; longer
// contexts clamp to the top bucket.
int bucket_of(int64_t context_len);

struct ProfiledCandidate {
  StrategyTuple strategy;
  double exp_accepted = 0.0;  // E[A], the guard's reference threshold
  double exp_latency = 0.0;   // E[T]
  double throughput = 0.0;    // E[A] / E[T]
};

struct ProfileEntry {
  int bucket = 0;
  PrecisionClass cls = PrecisionClass::Strict;
  std::vector<ProfiledCandidate> candidates;  // descending throughput
};

// Ranked strategies per (bucket, class), directly indexed so a lookup
// touches exactly one entry. `entry_accesses` counts entry touches and
// exists for the lookup-cost check in the tests.
struct ProfileTable {
  std::array<std::array<std::optional<ProfileEntry>, kNumClasses>, kNumBuckets> grid;
  cost::CostCoeffs coeffs;
  bool has_coeffs = false;
  mutable int64_t entry_accesses = 0;

  const ProfileEntry& at(int bucket, PrecisionClass cls) const;
  void put(ProfileEntry entry);
  int64_t stored_strategies() const;
};

// Per-step observations of one candidate evaluation.
struct EvalTrace {
  std::vector<double> step_accepted;
  std::vector<double> step_latency;
};

// Engine adapter: run speculative decoding with `strategy` on the
// calibration prompts of `bucket` and report the per-step observations.
using EvaluateFn = std::function<EvalTrace(const StrategyTuple& strategy, int bucket,
                                           PrecisionClass cls)>;

struct RawEvalRecord {
  int bucket = 0;
  PrecisionClass cls = PrecisionClass::Strict;
  StrategyTuple strategy;
  EvalTrace trace;
};

// Evaluates every class-valid candidate on every bucket and retains the
// top kCandidatesPerEntry per (bucket, class) by throughput. Throws when
// some class has no valid candidate. `raw` (optional) receives every
// evaluation for independent recomputation.
ProfileTable profile_offline(const EvaluateFn& evaluate,
                             const std::vector<StrategyTuple>& candidates,
                             std::vector<RawEvalRecord>* raw = nullptr);

// Rank-1 candidate for (r, P); exactly one entry access.
const ProfiledCandidate& preselect(const ProfileTable& table, int bucket, PrecisionClass cls);

std::string profile_to_json(const ProfileTable& table);
ProfileTable profile_from_json(const std::string& text);

}  // namespace specsv::plan
