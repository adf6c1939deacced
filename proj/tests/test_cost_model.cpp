// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specsv/cost/cost_model.hpp"
#include "specsv/rng.hpp"

using namespace specsv;

namespace {

verify::LoadStats layer_stats(int64_t unique, int64_t constructions, int64_t window) {
  verify::LoadStats s;
  s.unique_block_loads = unique;
  s.index_constructions = constructions;
  s.window_token_loads = window;
  s.total_requested_loads = unique;
  return s;
}

}  // namespace

TEST_CASE("account_step sums per-layer stats under the role plan") {
  const int64_t L = 4, gamma = 6;
  auto plan = schedule::resolve_layer_roles(std::vector<int64_t>{2, 3}, L);
  std::vector<verify::LoadStats> per_layer(L, layer_stats(10, gamma, 100));

  auto acc = cost::account_step(per_layer, plan);
  CHECK(acc.unique_loads == 40);
  CHECK(acc.window_tokens == 400);
  // reuse layers contribute zero constructions regardless of the raw stats
  CHECK(acc.constructions == 2 * gamma);
  CHECK(acc.launches == 2 * 2 + 2 * 1);

  SUBCASE("layer coverage mismatch is rejected") {
    per_layer.pop_back();
    CHECK_THROWS(cost::account_step(per_layer, plan));
  }
}

TEST_CASE("strict C=1 accounting gives gamma * L constructions") {
  const int64_t L = 8, gamma = 12;
  auto plan = schedule::resolve_layer_roles({}, L);
  std::vector<verify::LoadStats> per_layer(L, layer_stats(16, gamma, 64));
  auto acc = cost::account_step(per_layer, plan);
  CHECK(acc.constructions == gamma * L);
}

TEST_CASE("approximate grouping accounting: groups x refresh layers") {
  // C=4, gamma=64 -> 16 groups; 16 layers with half reused -> 16 * 8
  const int64_t L = 16, groups = 16;
  std::vector<int64_t> S;
  for (int64_t j = 1; j < L; j += 2) S.push_back(j);
  auto plan = schedule::resolve_layer_roles(S, L);
  std::vector<verify::LoadStats> per_layer(L, layer_stats(16, groups, 64));
  auto acc = cost::account_step(per_layer, plan);
  CHECK(acc.constructions == 16 * 8);
}

TEST_CASE("estimate_latency is linear and monotone") {
  cost::CostCoeffs c;
  c.c_base = 5.0;
  c.c_launch = 0.0;
  c.c_block = 2.0;
  c.c_index = 0.0;
  c.c_window = 0.0;

  cost::StepAccounting a;
  a.unique_loads = 10;
  CHECK(cost::estimate_latency(a, c) == doctest::Approx(25.0));

  SUBCASE("zero coefficients except base give the base") {
    cost::CostCoeffs base;
    base.c_base = 7.0;
    base.c_launch = base.c_block = base.c_index = base.c_window = 0.0;
    CHECK(cost::estimate_latency(a, base) == doctest::Approx(7.0));
  }

  SUBCASE("doubling unique loads doubles the variable part") {
    cost::StepAccounting b = a;
    b.unique_loads = 20;
    CHECK(cost::estimate_latency(b, c) - c.c_base ==
          doctest::Approx(2.0 * (cost::estimate_latency(a, c) - c.c_base)));
  }

  SUBCASE("higher overlap (fewer unique loads) never costs more") {
    // pair loads = 2n - s: s up -> unique down -> latency down
    for (int64_t s = 3; s <= 10; ++s) {
      cost::StepAccounting x;
      x.unique_loads = 2 * 16 - s;
      cost::StepAccounting y;
      y.unique_loads = 2 * 16 - (s + 1);
      CHECK(cost::estimate_latency(y, c) <= cost::estimate_latency(x, c));
    }
  }
}

TEST_CASE("reuse never costs more under the model") {
  cost::CostCoeffs c;  // defaults, all nonnegative
  const int64_t L = 8, gamma = 8;
  double prev = -1.0;
  std::vector<int64_t> S;
  for (int64_t k = 0; k < L; ++k) {
    if (k > 0) S.push_back(k);
    auto plan = schedule::resolve_layer_roles(S, L);
    std::vector<verify::LoadStats> per_layer;
    for (int64_t j = 0; j < L; ++j)
      per_layer.push_back(layer_stats(16, plan.is_reuse(j) ? 0 : gamma, 64));
    auto acc = cost::account_step(per_layer, plan);
    const double t = cost::estimate_latency(acc, c);
    if (prev >= 0.0) CHECK(t <= prev);
    prev = t;
  }
}

TEST_CASE("index share is reported as a fraction of the estimate") {
  cost::CostCoeffs c;
  cost::StepAccounting a;
  a.constructions = 10;
  a.unique_loads = 10;
  a.launches = 4;
  a.window_tokens = 100;
  const double share = cost::index_share(a, c);
  CHECK(share > 0.0);
  CHECK(share < 1.0);
  CHECK(share == doctest::Approx(c.c_index * 10.0 / cost::estimate_latency(a, c)));
}

TEST_CASE("least-squares fit recovers planted coefficients") {
  Rng rng(61);
  cost::CostCoeffs truth;
  truth.c_base = 3.0;
  truth.c_launch = 0.25;
  truth.c_block = 1.5;
  truth.c_index = 4.0;
  truth.c_window = 0.01;

  std::vector<cost::FitSample> samples;
  for (int i = 0; i < 60; ++i) {
    cost::FitSample s;
    s.acc.unique_loads = 8 + (int64_t)rng.next_below(64);
    s.acc.constructions = (int64_t)rng.next_below(128);
    s.acc.launches = 8 + (int64_t)rng.next_below(24);
    s.acc.window_tokens = 100 + (int64_t)rng.next_below(4000);
    s.measured = cost::estimate_latency(s.acc, truth) * (1.0 + 0.02 * (rng.next_unit() - 0.5));
    samples.push_back(s);
  }
  auto fit = cost::fit_cost_coeffs(samples);
  CHECK(fit.c_block == doctest::Approx(truth.c_block).epsilon(0.15));
  CHECK(fit.c_index == doctest::Approx(truth.c_index).epsilon(0.15));
  CHECK(fit.c_window == doctest::Approx(truth.c_window).epsilon(0.25));
  fit.validate();  // nonnegative by construction

  SUBCASE("fit never returns negative coefficients") {
    // anti-correlated noise pushes plain least squares negative
    std::vector<cost::FitSample> odd;
    for (int i = 0; i < 20; ++i) {
      cost::FitSample s;
      s.acc.unique_loads = i;
      s.acc.constructions = 0;
      s.acc.launches = 0;
      s.acc.window_tokens = 0;
      s.measured = 10.0 - 0.1 * i;  // latency falling in loads
      odd.push_back(s);
    }
    auto f2 = cost::fit_cost_coeffs(odd);
    CHECK_NOTHROW(f2.validate());
  }
}
