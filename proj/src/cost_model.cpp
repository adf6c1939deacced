// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/cost/cost_model.hpp"

#include <array>
#include <cmath>

namespace specsv::cost {

StepAccounting account_step(std::span<const verify::LoadStats> per_layer,
                            const schedule::LayerRolePlan& plan) {
  if (static_cast<int64_t>(per_layer.size()) != plan.n_layers)
    throw std::invalid_argument("account_step: stats must cover every layer");
  StepAccounting acc;
  acc.layers = plan.n_layers;
  for (int64_t j = 0; j < plan.n_layers; ++j) {
    const auto& s = per_layer[j];
    acc.unique_loads += s.unique_block_loads;
    acc.constructions += s.index_constructions;
    acc.launches += plan.layer_launches(j);
    acc.window_tokens += s.window_token_loads;
  }
  return acc;
}

double estimate_latency(const StepAccounting& acc, const CostCoeffs& coeffs) {
  return coeffs.c_base + coeffs.c_launch * static_cast<double>(acc.launches) +
         coeffs.c_block * static_cast<double>(acc.unique_loads) +
         coeffs.c_index * static_cast<double>(acc.constructions) +
         coeffs.c_window * static_cast<double>(acc.window_tokens);
}

double index_share(const StepAccounting& acc, const CostCoeffs& coeffs) {
  const double total = estimate_latency(acc, coeffs);
  if (total <= 0.0) return 0.0;
  return coeffs.c_index * static_cast<double>(acc.constructions) / total;
}

namespace {

constexpr int kDim = 5;  // base, launch, block, index, window

std::array<double, kDim> regressors(const StepAccounting& a) {
  return {1.0, static_cast<double>(a.launches), static_cast<double>(a.unique_loads),
          static_cast<double>(a.constructions), static_cast<double>(a.window_tokens)};
}

// solves A x = b by Gaussian elimination with partial pivoting over the
// free (unclamped) coordinates; returns false when singular
bool solve(std::array<std::array<double, kDim>, kDim> a, std::array<double, kDim> b,
           const std::array<bool, kDim>& free_coord, std::array<double, kDim>& x) {
  std::vector<int> idx;
  for (int i = 0; i < kDim; ++i)
    if (free_coord[i]) idx.push_back(i);
  const int n = static_cast<int>(idx.size());

  std::vector<std::vector<double>> m(n, std::vector<double>(n + 1, 0.0));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) m[r][c] = a[idx[r]][idx[c]];
    m[r][n] = b[idx[r]];
  }
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    if (std::fabs(m[piv][col]) < 1e-12) return false;
    std::swap(m[piv], m[col]);
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int c = col; c <= n; ++c) m[r][c] -= f * m[col][c];
    }
  }
  x.fill(0.0);
  for (int r = 0; r < n; ++r) x[idx[r]] = m[r][n] / m[r][r];
  return true;
}

}  // namespace

CostCoeffs fit_cost_coeffs(std::span<const FitSample> samples) {
  if (samples.empty()) throw std::invalid_argument("fit_cost_coeffs: no samples");

  std::array<std::array<double, kDim>, kDim> ata{};
  std::array<double, kDim> atb{};
  for (const FitSample& s : samples) {
    const auto r = regressors(s.acc);
    for (int i = 0; i < kDim; ++i) {
      atb[i] += r[i] * s.measured;
      for (int j = 0; j < kDim; ++j) ata[i][j] += r[i] * r[j];
    }
  }

  // active-set loop: clamp negative coordinates to zero and refit
  std::array<bool, kDim> free_coord;
  free_coord.fill(true);
  std::array<double, kDim> x{};
  for (int pass = 0; pass < kDim + 1; ++pass) {
    if (!solve(ata, atb, free_coord, x)) {
      // degenerate design: fall back to clamping everything except base
      break;
    }
    int worst = -1;
    double worst_val = 0.0;
    for (int i = 0; i < kDim; ++i) {
      if (free_coord[i] && x[i] < worst_val) {
        worst = i;
        worst_val = x[i];
      }
    }
    if (worst == -1) {
      CostCoeffs c;
      c.c_base = x[0];
      c.c_launch = x[1];
      c.c_block = x[2];
      c.c_index = x[3];
      c.c_window = x[4];
      return c;
    }
    free_coord[worst] = false;
    x[worst] = 0.0;
  }

  // nothing fit cleanly: mean latency as a flat model
  double mean = 0.0;
  for (const FitSample& s : samples) mean += s.measured;
  CostCoeffs c;
  c.c_base = mean / static_cast<double>(samples.size());
  c.c_launch = c.c_block = c.c_index = c.c_window = 0.0;
  return c;
}

}  // namespace specsv::cost
