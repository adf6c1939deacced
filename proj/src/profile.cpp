// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/plan/profile.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

namespace specsv::plan {

int bucket_of(int64_t context_len) {
  if (context_len < 0) throw std::invalid_argument("bucket_of: negative context length");
  const int64_t b = context_len / kBucketWidth;
  return b >= kNumBuckets ? kNumBuckets - 1 : static_cast<int>(b);
}

const ProfileEntry& ProfileTable::at(int bucket, PrecisionClass cls) const {
  if (bucket < 0 || bucket >= kNumBuckets)
    throw std::invalid_argument("ProfileTable: bucket out of range");
  const auto& slot = grid[bucket][static_cast<int>(cls)];
  if (!slot.has_value())
    throw std::invalid_argument("ProfileTable: no entry for bucket " + std::to_string(bucket) +
                                ", class " + to_string(cls));
  ++entry_accesses;
  return *slot;
}

void ProfileTable::put(ProfileEntry entry) {
  grid[entry.bucket][static_cast<int>(entry.cls)] = std::move(entry);
}

int64_t ProfileTable::stored_strategies() const {
  int64_t n = 0;
  for (const auto& row : grid)
    for (const auto& slot : row)
      if (slot) n += static_cast<int64_t>(slot->candidates.size());
  return n;
}

namespace {

ProfiledCandidate summarize(const StrategyTuple& s, const EvalTrace& trace) {
  if (trace.step_accepted.empty() || trace.step_accepted.size() != trace.step_latency.size())
    throw std::invalid_argument("profile_offline: empty or ragged evaluation trace");
  double sa = 0.0, st = 0.0;
  for (double a : trace.step_accepted) sa += a;
  for (double t : trace.step_latency) st += t;
  ProfiledCandidate c;
  c.strategy = s;
  c.exp_accepted = sa / static_cast<double>(trace.step_accepted.size());
  c.exp_latency = st / static_cast<double>(trace.step_latency.size());
  if (c.exp_latency <= 0.0) throw std::invalid_argument("profile_offline: nonpositive latency");
  c.throughput = c.exp_accepted / c.exp_latency;
  return c;
}

}  // namespace

ProfileTable profile_offline(const EvaluateFn& evaluate,
                             const std::vector<StrategyTuple>& candidates,
                             std::vector<RawEvalRecord>* raw) {
  ProfileTable table;
  for (int b = 0; b < kNumBuckets; ++b) {
    for (int c = 0; c < kNumClasses; ++c) {
      const auto cls = static_cast<PrecisionClass>(c);
      ProfileEntry entry;
      entry.bucket = b;
      entry.cls = cls;
      for (const StrategyTuple& s : candidates) {
        if (!satisfies(s, cls)) continue;
        EvalTrace trace = evaluate(s, b, cls);
        entry.candidates.push_back(summarize(s, trace));
        if (raw != nullptr) raw->push_back(RawEvalRecord{b, cls, s, std::move(trace)});
      }
      if (entry.candidates.empty())
        throw std::invalid_argument("profile_offline: no valid candidate for class " +
                                    to_string(cls));
      std::stable_sort(entry.candidates.begin(), entry.candidates.end(),
                       [](const ProfiledCandidate& x, const ProfiledCandidate& y) {
                         return x.throughput > y.throughput;
                       });
      if (entry.candidates.size() > kCandidatesPerEntry)
        entry.candidates.resize(kCandidatesPerEntry);
      table.put(std::move(entry));
    }
  }
  return table;
}

const ProfiledCandidate& preselect(const ProfileTable& table, int bucket, PrecisionClass cls) {
  const ProfileEntry& entry = table.at(bucket, cls);
  return entry.candidates.front();
}

namespace {

nlohmann::json strategy_to_json(const StrategyTuple& s) {
  nlohmann::json j{{"D", s.depth},
                   {"k", s.width},
                   {"T", tree::to_string(s.traversal)},
                   {"C", s.group_size},
                   {"M", to_string(s.mode)},
                   {"S", s.reuse_set}};
  if (s.budget) j["budget"] = *s.budget;
  return j;
}

StrategyTuple strategy_from_json(const nlohmann::json& j) {
  StrategyTuple s;
  s.depth = j.at("D").get<int64_t>();
  s.width = j.at("k").get<int64_t>();
  auto t = tree::traversal_from_string(j.at("T").get<std::string>());
  if (!t) throw std::invalid_argument("bad traversal in profile");
  s.traversal = *t;
  s.group_size = j.at("C").get<int64_t>();
  auto m = mode_from_string(j.at("M").get<std::string>());
  if (!m) throw std::invalid_argument("bad mode in profile");
  s.mode = *m;
  s.reuse_set = j.at("S").get<std::vector<int64_t>>();
  if (j.contains("budget")) s.budget = j.at("budget").get<int64_t>();
  return s;
}

}  // namespace

std::string profile_to_json(const ProfileTable& table) {
  nlohmann::json j;
  j["version"] = 1;
  if (table.has_coeffs) {
    j["cost_coeffs"] = {{"c_block", table.coeffs.c_block},
                        {"c_index", table.coeffs.c_index},
                        {"c_launch", table.coeffs.c_launch},
                        {"c_window", table.coeffs.c_window},
                        {"c_base", table.coeffs.c_base}};
  }
  j["entries"] = nlohmann::json::array();
  for (int b = 0; b < kNumBuckets; ++b) {
    for (int c = 0; c < kNumClasses; ++c) {
      const auto& slot = table.grid[b][c];
      if (!slot) continue;
      nlohmann::json je{{"bucket", b}, {"class", to_string(static_cast<PrecisionClass>(c))}};
      je["candidates"] = nlohmann::json::array();
      for (const auto& cand : slot->candidates) {
        je["candidates"].push_back({{"strategy", strategy_to_json(cand.strategy)},
                                    {"exp_a", cand.exp_accepted},
                                    {"exp_t", cand.exp_latency},
                                    {"thr", cand.throughput}});
      }
      j["entries"].push_back(std::move(je));
    }
  }
  return j.dump(2);
}

ProfileTable profile_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ProfileTable table;
  if (j.contains("cost_coeffs")) {
    const auto& jc = j.at("cost_coeffs");
    table.coeffs.c_block = jc.at("c_block").get<double>();
    table.coeffs.c_index = jc.at("c_index").get<double>();
    table.coeffs.c_launch = jc.at("c_launch").get<double>();
    table.coeffs.c_window = jc.at("c_window").get<double>();
    table.coeffs.c_base = jc.at("c_base").get<double>();
    table.has_coeffs = true;
  }
  for (const auto& je : j.at("entries")) {
    ProfileEntry entry;
    entry.bucket = je.at("bucket").get<int>();
    auto cls = class_from_string(je.at("class").get<std::string>());
    if (!cls) throw std::invalid_argument("bad class in profile");
    entry.cls = *cls;
    for (const auto& jc : je.at("candidates")) {
      ProfiledCandidate cand;
      cand.strategy = strategy_from_json(jc.at("strategy"));
      cand.exp_accepted = jc.at("exp_a").get<double>();
      cand.exp_latency = jc.at("exp_t").get<double>();
      cand.throughput = jc.at("thr").get<double>();
      entry.candidates.push_back(std::move(cand));
    }
    table.put(std::move(entry));
  }
  return table;
}

}  // namespace specsv::plan
