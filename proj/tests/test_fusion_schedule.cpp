// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specsv/schedule/layer_roles.hpp"

using namespace specsv;
using schedule::LayerRole;

TEST_CASE("resolve_layer_roles: reference schedule sources") {
  // L=16, S={3,6,7,8,12,13,14,15}
  const std::vector<int64_t> S{3, 6, 7, 8, 12, 13, 14, 15};
  auto plan = schedule::resolve_layer_roles(S, 16);
  CHECK(plan.source[3] == 2);
  CHECK(plan.source[6] == 5);
  CHECK(plan.source[7] == 5);
  CHECK(plan.source[8] == 5);
  for (int64_t j : {12, 13, 14, 15}) CHECK(plan.source[j] == 11);
  for (int64_t j = 0; j < 16; ++j) {
    if (plan.roles[j] == LayerRole::Refresh) CHECK(plan.source[j] == j);
  }
  CHECK(plan.refresh_count() == 8);
}

TEST_CASE("resolve_layer_roles: empty and alternating schedules") {
  auto strict = schedule::resolve_layer_roles({}, 16);
  for (int64_t j = 0; j < 16; ++j) CHECK(strict.roles[j] == LayerRole::Refresh);
  CHECK(strict.launches_per_step() == 2 * 16);

  const auto alt_ids = schedule::parse_reuse_schedule("alt", 16);
  CHECK(alt_ids == std::vector<int64_t>{1, 3, 5, 7, 9, 11, 13, 15});
  auto alt = schedule::resolve_layer_roles(alt_ids, 16);
  for (int64_t j = 1; j < 16; j += 2) CHECK(alt.source[j] == j - 1);
  CHECK(alt.launches_per_step() == 2 * 8 + 8);
}

TEST_CASE("resolve_layer_roles: configuration errors") {
  CHECK_THROWS(schedule::resolve_layer_roles(std::vector<int64_t>{0}, 8));
  CHECK_THROWS(schedule::resolve_layer_roles(std::vector<int64_t>{8}, 8));
  CHECK_THROWS(schedule::resolve_layer_roles(std::vector<int64_t>{-1}, 8));
}

TEST_CASE("launch accounting decreases with reuse") {
  int64_t prev = schedule::resolve_layer_roles({}, 16).launches_per_step();
  std::vector<int64_t> S;
  for (int64_t j = 1; j < 16; ++j) {
    S.push_back(j);
    const int64_t now = schedule::resolve_layer_roles(S, 16).launches_per_step();
    CHECK(now < prev);
    CHECK(now <= schedule::kVanillaLaunches * 16);
    prev = now;
  }
}

TEST_CASE("clamp_inherited_indices") {
  nsa::NsaConfig cfg;
  cfg.l_sel = 64;
  nsa::SelectedIndexSet src;
  src.indices = {0, 2, 5, 9};
  src.forced = {true, false, false, true};

  SUBCASE("bound beyond all blocks leaves the set unchanged") {
    auto out = schedule::clamp_inherited_indices(src, 10 * 64, cfg);
    CHECK(out.indices.indices == src.indices);
    CHECK(out.indices.forced == src.forced);
  }

  SUBCASE("bound inside a block keeps it with a token mask") {
    auto out = schedule::clamp_inherited_indices(src, 5 * 64 + 10, cfg);
    CHECK(out.indices.indices == std::vector<int64_t>{0, 2, 5});
    CHECK(out.token_bound == 5 * 64 + 10);
  }

  SUBCASE("bound before all non-forced blocks keeps the forced prefix") {
    auto out = schedule::clamp_inherited_indices(src, 64, cfg);
    CHECK(out.indices.indices == std::vector<int64_t>{0});
    CHECK(out.indices.forced == std::vector<bool>{true});
  }
}

TEST_CASE("schedule text forms round trip") {
  CHECK(schedule::parse_reuse_schedule("none", 8).empty());
  CHECK(schedule::parse_reuse_schedule("", 8).empty());
  CHECK(schedule::parse_reuse_schedule("3,6,7", 8) == std::vector<int64_t>{3, 6, 7});
  CHECK(schedule::schedule_to_string(std::vector<int64_t>{3, 6, 7}) == "3,6,7");
  CHECK(schedule::schedule_to_string(std::vector<int64_t>{}) == "none");
  CHECK_THROWS(schedule::parse_reuse_schedule("3,x", 8));
}

TEST_CASE("greedy calibration over a synthetic deviation functional") {
  // deviation = sum of per-layer penalties; layers 4..6 are free
  auto deviation = [](std::span<const int64_t> S) {
    double d = 0.0;
    for (int64_t j : S) d += (j >= 4 && j <= 6) ? 0.0 : 0.1 * static_cast<double>(j);
    return d;
  };

  SUBCASE("zero tolerance with nonzero drift keeps S empty") {
    auto strict = [](std::span<const int64_t> S) { return S.empty() ? 0.0 : 0.5; };
    auto res = schedule::greedy_reuse_calibration(8, 1e-9, strict);
    CHECK(res.reuse_set.empty());
  }

  SUBCASE("free layers are converted first") {
    auto res = schedule::greedy_reuse_calibration(8, 0.15, deviation);
    REQUIRE(res.reuse_set.size() >= 3);
    // the first three accepted layers are exactly {4,5,6}
    std::vector<int64_t> first3(res.deviation_trace.size() >= 3 ? 3 : 0);
    CHECK(res.deviation_trace[0] == 0.0);
    CHECK(res.deviation_trace[1] == 0.0);
    CHECK(res.deviation_trace[2] == 0.0);
    for (int64_t j : {4, 5, 6})
      CHECK(std::find(res.reuse_set.begin(), res.reuse_set.end(), j) != res.reuse_set.end());
  }

  SUBCASE("greedy deviation trace is non-decreasing") {
    auto res = schedule::greedy_reuse_calibration(8, 1.0, deviation);
    for (size_t i = 1; i < res.deviation_trace.size(); ++i)
      CHECK(res.deviation_trace[i] >= res.deviation_trace[i - 1]);
  }
}
