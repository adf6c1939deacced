// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "specsv/plan/profile.hpp"

namespace specsv::plan {

struct GuardConstants {
  double alpha = 0.40;     // EMA coefficient
  double rho = 0.85;       // acceptance-drop ratio
  int64_t warmup = 8;      // minimum observation count m
  int64_t hysteresis = 5;  // consecutive sub-threshold steps h
};

struct StepMetrics {
  double accepted = 0.0;  // A_t, bonus included
  double latency = 0.0;   // T_t, measured or modeled
};

// Per-request guard state. The EMA seeds from the first observation; the
// warmup counts from the start of the request and does not restart on a
// transition (the EMA and the hysteresis counter do reset).
struct RefinerState {
  GuardConstants consts;
  double ema = 0.0;
  bool ema_primed = false;
  int64_t steps_seen = 0;
  int64_t below_count = 0;
  int64_t transitions = 0;
  int64_t active_rank = 0;
  bool settled = false;

  struct Explored {
    int64_t rank = 0;
    double sum_accepted = 0.0;
    double sum_latency = 0.0;
    int64_t steps = 0;
  };
  std::vector<Explored> explored;

  double observed_throughput(int64_t rank) const;
};

struct RefineDecision {
  bool switched = false;
  bool settled_now = false;
  int64_t active_rank = 0;
};

// One guard update against the entry the active strategy came from.
// Within the early window only; the caller stops invoking this after
// `early_window` steps (default 32). After two transitions the guard
// settles on the best explored configuration and goes quiet.
RefineDecision refine_step(RefinerState& state, const StepMetrics& metrics,
                           const ProfileEntry& entry);

inline constexpr int64_t kMaxTransitions = 2;
inline constexpr int64_t kDefaultEarlyWindow = 32;

}  // namespace specsv::plan
