// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specsv/nsa/config.hpp"

namespace specsv::model {

enum class AttentionKind { Nsa, Dense };

// Deterministic desk-scale transformer. The target runs the three-branch
// sparse attention in every layer; the draft runs plain dense causal
// attention. Both add a shared seeded bigram bias to their logits so a
// weak draft still agrees with the target often enough for acceptance to
// be interesting.
struct ToyModelSpec {
  uint64_t seed = 1;
  int64_t n_layers = 8;
  int64_t hidden = 256;
  int64_t vocab = 1024;
  int64_t mlp_mult = 4;
  AttentionKind attention = AttentionKind::Nsa;
  nsa::NsaConfig nsa;  // n_q_heads * d_head must equal hidden
  double bigram_scale = 4.0;
  uint64_t bigram_seed = 7;  // shared between target and draft
  int64_t max_context = 16384;

  void validate() const;

  // draft derived from this target: dense attention, optionally truncated
  // depth, either sharing the target seed (truncated) or independent
  ToyModelSpec derive_draft(int64_t layers, bool independent_seed, uint64_t draft_seed) const;
};

struct LayerWeights {
  std::vector<float> wq, wk, wv, wo;      // [out][in], row-major
  std::vector<float> w_gate;              // [3][d_head]
  std::vector<float> mlp_in, mlp_out;     // [mlp][h], [h][mlp]
  std::vector<float> rms_attn, rms_mlp;   // [h]
};

struct ToyModel {
  ToyModelSpec spec;
  std::vector<float> embedding;      // [vocab][hidden]
  std::vector<float> key_pos_embed;  // [l][d_head], compression-key offsets
  std::vector<LayerWeights> layers;
  std::vector<float> rms_final;  // [h]
  std::vector<float> w_out;      // [vocab][hidden]
  std::vector<float> bigram;     // [vocab][vocab], shared-seed logit bias

  static ToyModel build(const ToyModelSpec& spec);

  // token embedding plus sinusoidal position embedding
  void embed(int32_t token, int64_t pos, float* out) const;

  const float* bigram_row(int32_t token) const {
    return bigram.data() + static_cast<int64_t>(token) * spec.vocab;
  }
};

}  // namespace specsv::model
