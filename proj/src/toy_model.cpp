// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/model/toy_model.hpp"

#include <cmath>
#include <stdexcept>

#include "specsv/rng.hpp"

namespace specsv::model {

void ToyModelSpec::validate() const {
  nsa.validate();
  if (n_layers != nsa.n_layers) throw std::invalid_argument("ToyModelSpec: layer count mismatch");
  if (hidden != nsa.n_q_heads * nsa.d_head)
    throw std::invalid_argument("ToyModelSpec: hidden must equal n_q_heads * d_head");
  if (vocab < 2) throw std::invalid_argument("ToyModelSpec: vocab too small");
  if (max_context < 1) throw std::invalid_argument("ToyModelSpec: max_context must be positive");
}

ToyModelSpec ToyModelSpec::derive_draft(int64_t layers, bool independent_seed,
                                        uint64_t draft_seed) const {
  ToyModelSpec d = *this;
  d.n_layers = layers;
  d.nsa.n_layers = layers;
  d.attention = AttentionKind::Dense;
  // dense attention realized as a window covering the whole context
  d.nsa.w = 2 * max_context;
  d.seed = independent_seed ? draft_seed : seed;
  return d;
}

namespace {

void fill_uniform(Rng& rng, std::vector<float>& v, float scale) {
  for (float& x : v) x = rng.next_symmetric(scale);
}

}  // namespace

ToyModel ToyModel::build(const ToyModelSpec& spec) {
  spec.validate();
  ToyModel m;
  m.spec = spec;
  Rng root(spec.seed);

  const int64_t h = spec.hidden;
  const int64_t dh = spec.nsa.d_head;
  const int64_t kvdim = spec.nsa.n_kv_heads * dh;
  const int64_t mlp = spec.mlp_mult * h;
  const float s_h = 1.0f / std::sqrt(static_cast<float>(h));
  const float s_mlp = 1.0f / std::sqrt(static_cast<float>(mlp));

  {
    Rng r = root.fork(1);
    m.embedding.resize(spec.vocab * h);
    fill_uniform(r, m.embedding, 0.5f);
  }
  {
    Rng r = root.fork(2);
    m.key_pos_embed.resize(spec.nsa.l * dh);
    fill_uniform(r, m.key_pos_embed, 0.1f);
  }
  m.layers.resize(spec.n_layers);
  for (int64_t j = 0; j < spec.n_layers; ++j) {
    Rng r = root.fork(100 + j);
    LayerWeights& lw = m.layers[j];
    lw.wq.resize(h * h);
    lw.wk.resize(kvdim * h);
    lw.wv.resize(kvdim * h);
    lw.wo.resize(h * h);
    lw.w_gate.resize(3 * dh);
    lw.mlp_in.resize(mlp * h);
    lw.mlp_out.resize(h * mlp);
    lw.rms_attn.assign(h, 1.0f);
    lw.rms_mlp.assign(h, 1.0f);
    fill_uniform(r, lw.wq, s_h);
    fill_uniform(r, lw.wk, s_h);
    fill_uniform(r, lw.wv, s_h);
    fill_uniform(r, lw.wo, s_h);
    fill_uniform(r, lw.w_gate, 1.0f / std::sqrt(static_cast<float>(dh)));
    fill_uniform(r, lw.mlp_in, s_h);
    fill_uniform(r, lw.mlp_out, s_mlp);
  }
  m.rms_final.assign(h, 1.0f);
  {
    Rng r = root.fork(3);
    m.w_out.resize(spec.vocab * h);
    fill_uniform(r, m.w_out, s_h);
  }
  {
    Rng r(spec.bigram_seed);  // deliberately not forked from the model seed
    m.bigram.resize(spec.vocab * spec.vocab);
    for (float& x : m.bigram)
      x = static_cast<float>(spec.bigram_scale * (2.0 * r.next_unit() - 1.0));
  }
  return m;
}

void ToyModel::embed(int32_t token, int64_t pos, float* out) const {
  const int64_t h = spec.hidden;
  const float* e = embedding.data() + static_cast<int64_t>(token) * h;
  for (int64_t i = 0; i < h; ++i) {
    const double exponent = static_cast<double>(i / 2 * 2) / static_cast<double>(h);
    const double freq = std::pow(10000.0, -exponent);
    const double angle = static_cast<double>(pos) * freq;
    const double p = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    out[i] = e[i] + 0.1f * static_cast<float>(p);
  }
}

}  // namespace specsv::model
