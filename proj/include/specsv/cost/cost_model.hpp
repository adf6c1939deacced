// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "specsv/schedule/layer_roles.hpp"
#include "specsv/verify/grouping.hpp"

namespace specsv::cost {

// Linear step-latency model. Units are abstract; calibrate-cost fits them
// to measured step times on the current machine.
struct CostCoeffs {
  double c_block = 1.0;    // per unique selected-block load
  double c_index = 4.0;    // per index construction
  double c_launch = 0.5;   // per modeled launch
  double c_window = 0.02;  // per window token
  double c_base = 10.0;    // fixed per step

  void validate() const {
    if (c_block < 0 || c_index < 0 || c_launch < 0 || c_window < 0 || c_base < 0)
      throw std::invalid_argument("CostCoeffs: coefficients must be nonnegative");
  }
};

// Per-step totals over all layers and groups.
struct StepAccounting {
  int64_t unique_loads = 0;
  int64_t constructions = 0;
  int64_t launches = 0;
  int64_t window_tokens = 0;
  int64_t layers = 0;
};

// Aggregates per-layer stats under the layer-role plan. `per_layer` must
// hold exactly one (already group-summed) entry per layer.
StepAccounting account_step(std::span<const verify::LoadStats> per_layer,
                            const schedule::LayerRolePlan& plan);

double estimate_latency(const StepAccounting& acc, const CostCoeffs& coeffs);

// Share of the estimate attributable to index construction.
double index_share(const StepAccounting& acc, const CostCoeffs& coeffs);

// Least-squares fit of the coefficients to measured step times, with
// nonnegativity enforced by active-set clamping. Each sample pairs a step
// accounting with a measured latency.
struct FitSample {
  StepAccounting acc;
  double measured = 0.0;
};

CostCoeffs fit_cost_coeffs(std::span<const FitSample> samples);

}  // namespace specsv::cost
