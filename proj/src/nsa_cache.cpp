// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/nsa/cache.hpp"

#include <cassert>

#include "specsv/kernels.hpp"

namespace specsv::nsa {

namespace {

// pools rows [block*d, block*d + l) of one head into k/v block vectors
void pool_block(const LayerKv& kv, int64_t head, int64_t block, const NsaConfig& cfg,
                const float* key_pos_embed, float* out_k, float* out_v) {
  const auto& ker = kernels::active();
  const size_t dim = static_cast<size_t>(cfg.d_head);
  std::vector<double> acc_k(dim, 0.0), acc_v(dim, 0.0);
  const int64_t start = block * cfg.d;
  for (int64_t o = 0; o < cfg.l; ++o) {
    ker.accum_f32(kv.k_row(head, start + o), acc_k.data(), dim);
    if (key_pos_embed != nullptr) {
      ker.accum_f32(key_pos_embed + o * cfg.d_head, acc_k.data(), dim);
    }
    ker.accum_f32(kv.v_row(head, start + o), acc_v.data(), dim);
  }
  const double inv_l = 1.0 / static_cast<double>(cfg.l);
  for (size_t j = 0; j < dim; ++j) {
    out_k[j] = static_cast<float>(acc_k[j] * inv_l);
    out_v[j] = static_cast<float>(acc_v[j] * inv_l);
  }
}

}  // namespace

CompressedLayer build_compressed_layer(const LayerKv& kv, int64_t committed_len,
                                       const NsaConfig& cfg, const float* key_pos_embed) {
  CompressedLayer out;
  out.n_kv_heads = cfg.n_kv_heads;
  out.d_head = cfg.d_head;
  extend_compressed_layer(out, kv, committed_len, cfg, key_pos_embed);
  return out;
}

void extend_compressed_layer(CompressedLayer& out, const LayerKv& kv, int64_t committed_len,
                             const NsaConfig& cfg, const float* key_pos_embed) {
  assert(committed_len <= kv.rows);
  out.n_kv_heads = cfg.n_kv_heads;
  out.d_head = cfg.d_head;
  const int64_t want = compressed_block_count(committed_len, cfg);
  if (want <= out.block_count) {
    out.source_rows = committed_len;
    return;
  }
  out.k.resize(static_cast<size_t>(want * cfg.n_kv_heads * cfg.d_head));
  out.v.resize(out.k.size());
  for (int64_t b = out.block_count; b < want; ++b) {
    for (int64_t h = 0; h < cfg.n_kv_heads; ++h) {
      float* ok = out.k.data() + (b * cfg.n_kv_heads + h) * cfg.d_head;
      float* ov = out.v.data() + (b * cfg.n_kv_heads + h) * cfg.d_head;
      pool_block(kv, h, b, cfg, key_pos_embed, ok, ov);
    }
  }
  out.block_count = want;
  out.source_rows = committed_len;
}

}  // namespace specsv::nsa
