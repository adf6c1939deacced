// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace specsv::nsa {

// Hyperparameters of the three-branch sparse attention scheme.
//
// The compression branch pools overlapping blocks of length `l` at stride
// `d`; the selection branch routes each query to `n` raw blocks of
// `l_sel` tokens; the window branch densely covers the last `w` tokens.
//
// `routing_lag` freezes the compression/selection view of the cache at
// `pos + 1 - routing_lag` tokens. Tokens inside the lag gap are covered
// densely by the window branch (hence w >= routing_lag). The lag makes the
// routing state a function of the query position alone, so a query
// evaluated inside a verification batch sees exactly the routing state it
// would see under one-token-at-a-time decoding. Draft trees deeper than
// routing_lag are rejected by the engine.
struct NsaConfig {
  int64_t l = 32;         // compression block length (tokens)
  int64_t d = 16;         // compression stride (tokens)
  int64_t l_sel = 64;     // selected block size (tokens)
  int64_t n = 16;         // selected block count
  int64_t w = 512;        // sliding window size (tokens)
  int64_t n_q_heads = 4;
  int64_t n_kv_heads = 2;
  int64_t d_head = 64;
  int64_t n_layers = 8;
  int64_t routing_lag = 16;

  int64_t gqa_group_size() const { return n_q_heads / n_kv_heads; }

  void validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("NsaConfig: " + msg); };
    if (l <= 0) fail("l must be positive");
    if (d <= 0 || d > l) fail("d must satisfy 0 < d <= l");
    if (l_sel <= 0 || l_sel % d != 0) fail("l_sel must be a positive multiple of d");
    if (n < 3) fail("n must be at least 3 (initial + local blocks)");
    if (w <= 0) fail("w must be positive");
    if (n_q_heads <= 0 || n_kv_heads <= 0 || n_q_heads % n_kv_heads != 0)
      fail("n_q_heads must be a positive multiple of n_kv_heads");
    if (d_head <= 0) fail("d_head must be positive");
    if (n_layers <= 0) fail("n_layers must be positive");
    if (routing_lag < 0) fail("routing_lag must be nonnegative");
    if (w < routing_lag) fail("w must cover the routing lag");
  }

  // routing view of the cache for a query at absolute position `pos`:
  // compression/selection see tokens [0, routing_visible_len(pos))
  int64_t routing_visible_len(int64_t pos) const {
    int64_t v = pos + 1 - routing_lag;
    return v > 0 ? v : 0;
  }
};

}  // namespace specsv::nsa
