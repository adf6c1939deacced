// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

#include "specsv/nsa/config.hpp"

namespace specsv::nsa {

// Committed K/V rows for one layer, row-major: row r, head h lives at
// offset (r * n_kv_heads + h) * d_head. Appending a token is O(heads).
struct LayerKv {
  int64_t n_kv_heads = 0;
  int64_t d_head = 0;
  int64_t rows = 0;
  std::vector<float> k;
  std::vector<float> v;

  LayerKv() = default;
  LayerKv(int64_t heads, int64_t dim) : n_kv_heads(heads), d_head(dim) {}

  const float* k_row(int64_t head, int64_t row) const {
    assert(row >= 0 && row < rows);
    return k.data() + (row * n_kv_heads + head) * d_head;
  }
  const float* v_row(int64_t head, int64_t row) const {
    assert(row >= 0 && row < rows);
    return v.data() + (row * n_kv_heads + head) * d_head;
  }

  // all heads of one row, n_kv_heads * d_head floats
  const float* k_row_all(int64_t row) const { return k.data() + row * n_kv_heads * d_head; }
  const float* v_row_all(int64_t row) const { return v.data() + row * n_kv_heads * d_head; }

  // appends one row per head; inputs hold n_kv_heads * d_head floats, head-major
  void append(const float* k_rows, const float* v_rows) {
    k.insert(k.end(), k_rows, k_rows + n_kv_heads * d_head);
    v.insert(v.end(), v_rows, v_rows + n_kv_heads * d_head);
    rows += 1;
  }
};

// Whole-model committed cache.
struct KvCache {
  int64_t committed_len = 0;  // tokens whose rows are stored
  std::vector<LayerKv> layers;

  KvCache() = default;
  explicit KvCache(const NsaConfig& cfg) {
    layers.assign(static_cast<size_t>(cfg.n_layers), LayerKv(cfg.n_kv_heads, cfg.d_head));
  }
};

// Pooled compression blocks for one layer. Block i pools source rows
// [i*d, i*d + l); block_count(N) = floor((N - l) / d) + 1 for N >= l.
// Block-major per head so a head's blocks scan contiguously.
struct CompressedLayer {
  int64_t n_kv_heads = 0;
  int64_t d_head = 0;
  int64_t block_count = 0;
  int64_t source_rows = 0;  // committed rows the blocks were built from
  std::vector<float> k;     // [block][head][d_head]
  std::vector<float> v;

  const float* k_block(int64_t head, int64_t block) const {
    assert(block >= 0 && block < block_count);
    return k.data() + (block * n_kv_heads + head) * d_head;
  }
  const float* v_block(int64_t head, int64_t block) const {
    return v.data() + (block * n_kv_heads + head) * d_head;
  }

  // blocks fully contained in [0, visible_len)
  int64_t visible_blocks(int64_t visible_len, const NsaConfig& cfg) const {
    if (visible_len < cfg.l) return 0;
    int64_t by_len = (visible_len - cfg.l) / cfg.d + 1;
    return by_len < block_count ? by_len : block_count;
  }
};

inline int64_t compressed_block_count(int64_t n_rows, const NsaConfig& cfg) {
  return n_rows >= cfg.l ? (n_rows - cfg.l) / cfg.d + 1 : 0;
}

// Pools committed K/V rows into compression blocks. Keys get a seeded
// per-offset position embedding added before pooling; values are plain
// means. `key_pos_embed` holds l * d_head floats (offset-major) and comes
// from the model weights; null means no embedding.
CompressedLayer build_compressed_layer(const LayerKv& kv, int64_t committed_len,
                                       const NsaConfig& cfg, const float* key_pos_embed);

// Extends `out` in place as committed_len grows (blocks are append-only).
void extend_compressed_layer(CompressedLayer& out, const LayerKv& kv, int64_t committed_len,
                             const NsaConfig& cfg, const float* key_pos_embed);

}  // namespace specsv::nsa
