// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/plan/strategy.hpp"

#include <sstream>
#include <stdexcept>

namespace specsv::plan {

std::string to_string(CoarseningMode m) {
  return m == CoarseningMode::Exact ? "exact" : "approx";
}

std::string to_string(PrecisionClass p) {
  switch (p) {
    case PrecisionClass::Strict: return "strict";
    case PrecisionClass::ReuseOnly: return "reuse-only";
    case PrecisionClass::ApproxOnly: return "approx-only";
    case PrecisionClass::ApproxReuse: return "approx-reuse";
  }
  return "?";
}

std::optional<CoarseningMode> mode_from_string(std::string_view s) {
  if (s == "exact") return CoarseningMode::Exact;
  if (s == "approx" || s == "approximate") return CoarseningMode::Approximate;
  return std::nullopt;
}

std::optional<PrecisionClass> class_from_string(std::string_view s) {
  if (s == "strict") return PrecisionClass::Strict;
  if (s == "reuse-only") return PrecisionClass::ReuseOnly;
  if (s == "approx-only") return PrecisionClass::ApproxOnly;
  if (s == "approx-reuse" || s == "approx+reuse") return PrecisionClass::ApproxReuse;
  return std::nullopt;
}

std::string StrategyTuple::to_string() const {
  std::ostringstream os;
  os << depth << ',' << width << ',' << tree::to_string(traversal) << ',' << group_size << ','
     << plan::to_string(mode);
  if (!reuse_set.empty()) {
    os << "/S=";
    for (size_t i = 0; i < reuse_set.size(); ++i) {
      if (i) os << '+';
      os << reuse_set[i];
    }
  }
  return os.str();
}

bool satisfies(const StrategyTuple& s, PrecisionClass p) {
  if (s.depth < 1 || s.width < 1 || s.group_size < 1) return false;
  const bool exact = s.mode == CoarseningMode::Exact;
  const bool no_reuse = s.reuse_set.empty();
  switch (p) {
    case PrecisionClass::Strict: return exact && no_reuse;
    case PrecisionClass::ReuseOnly: return exact && !no_reuse;
    case PrecisionClass::ApproxOnly: return !exact && no_reuse;
    case PrecisionClass::ApproxReuse: return !exact && !no_reuse;
  }
  return false;
}

void validate_strategy(const StrategyTuple& s, PrecisionClass p) {
  if (!satisfies(s, p)) {
    throw std::invalid_argument("strategy " + s.to_string() + " violates precision class " +
                                to_string(p));
  }
}

StrategyTuple parse_strategy(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  if (parts.size() != 5)
    throw std::invalid_argument("strategy must be D,k,T,C,M (got '" + text + "')");
  StrategyTuple s;
  s.depth = std::stoll(parts[0]);
  s.width = std::stoll(parts[1]);
  auto t = tree::traversal_from_string(parts[2]);
  if (!t) throw std::invalid_argument("bad traversal '" + parts[2] + "'");
  s.traversal = *t;
  s.group_size = std::stoll(parts[3]);
  auto m = mode_from_string(parts[4]);
  if (!m) throw std::invalid_argument("bad coarsening mode '" + parts[4] + "'");
  s.mode = *m;
  if (s.depth < 1 || s.width < 1 || s.group_size < 1)
    throw std::invalid_argument("strategy fields must be >= 1");
  return s;
}

}  // namespace specsv::plan
