// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specsv/tree/draft_tree.hpp"

namespace specsv::plan {

enum class CoarseningMode { Exact, Approximate };

// User-facing precision classes bounding the (M, S) subspace.
enum class PrecisionClass : int { Strict = 0, ReuseOnly = 1, ApproxOnly = 2, ApproxReuse = 3 };

inline constexpr int kNumClasses = 4;

std::string to_string(CoarseningMode m);
std::string to_string(PrecisionClass p);
std::optional<CoarseningMode> mode_from_string(std::string_view s);
std::optional<PrecisionClass> class_from_string(std::string_view s);

// Joint draft-side / verification-side plan:
// theta_d = (depth D, width k, traversal T), theta_s = (group size C,
// mode M, reuse schedule S), plus an optional node budget for the tree.
struct StrategyTuple {
  int64_t depth = 4;
  int64_t width = 2;
  tree::Traversal traversal = tree::Traversal::BFS;
  int64_t group_size = 2;
  CoarseningMode mode = CoarseningMode::Exact;
  std::vector<int64_t> reuse_set;
  std::optional<int64_t> budget;

  std::string to_string() const;  // "D,k,T,C,M" (+ "/S=..." when reuse set nonempty)
};

bool satisfies(const StrategyTuple& s, PrecisionClass p);
void validate_strategy(const StrategyTuple& s, PrecisionClass p);  // throws on mismatch

// "D,k,T,C,M" (e.g. "4,2,BFS,2,exact"); the reuse schedule is carried
// separately because it depends on the layer count.
StrategyTuple parse_strategy(const std::string& text);

}  // namespace specsv::plan
