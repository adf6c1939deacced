// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/engine/engine.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "specsv/kernels.hpp"
#include "specsv/rng.hpp"

namespace specsv::engine {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void rmsnorm(const float* x, const float* scale, int64_t n, float* out) {
  const auto& ker = kernels::active();
  const double ss = ker.dot_f32(x, x, static_cast<size_t>(n)) / static_cast<double>(n);
  const double r = 1.0 / std::sqrt(ss + 1e-5);
  for (int64_t i = 0; i < n; ++i)
    out[i] = static_cast<float>(static_cast<double>(x[i]) * r * static_cast<double>(scale[i]));
}

// y = W x with W row-major [out_dim][in_dim]
void linear(const float* w, const float* x, int64_t out_dim, int64_t in_dim, float* y) {
  const auto& ker = kernels::active();
  for (int64_t o = 0; o < out_dim; ++o)
    y[o] = static_cast<float>(ker.dot_f32(w + o * in_dim, x, static_cast<size_t>(in_dim)));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int32_t argmax_token(std::span<const double> logits) {
  int32_t best = 0;
  for (int32_t v = 1; v < static_cast<int32_t>(logits.size()); ++v)
    if (logits[v] > logits[best]) best = v;
  return best;
}

}  // namespace

// ---------------------------------------------------------------------
// construction / state

Engine::Engine(const model::ToyModelSpec& target_spec, const model::ToyModelSpec& draft_spec) {
  target_.model = model::ToyModel::build(target_spec);
  draft_.model = model::ToyModel::build(draft_spec);
  if (target_spec.attention != model::AttentionKind::Nsa)
    throw std::invalid_argument("engine: target must use sparse attention");
  if (draft_spec.attention != model::AttentionKind::Dense)
    throw std::invalid_argument("engine: draft must use dense attention");
  if (target_spec.vocab != draft_spec.vocab)
    throw std::invalid_argument("engine: vocab mismatch between target and draft");
  reset();
}

void Engine::reset() {
  target_.cache = nsa::KvCache(target_.model.spec.nsa);
  target_.cc.assign(target_.model.spec.n_layers, nsa::CompressedLayer{});
  draft_.cache = nsa::KvCache(draft_.model.spec.nsa);
  draft_.cc.clear();
  tokens_.clear();
}

// ---------------------------------------------------------------------
// target pass

namespace {

struct PassQuery {
  int32_t token = 0;
  int64_t pos = 0;
  bool commit = false;                // pending root: rows go to the committed cache
  std::vector<int32_t> admitted;      // scratch rows admitted by the tree mask (self included)
};

struct TargetPassResult {
  std::vector<std::vector<float>> hidden;  // final hidden per query (pre readout norm)
  std::vector<nsa::LayerKv> scratch;       // per layer, rows in flat order
  std::vector<verify::LoadStats> per_layer;
  double dev_sum = 0.0;
  double dev_max = 0.0;
  int64_t dev_count = 0;
};

}  // namespace

struct Engine::DraftExpansion {
  std::vector<nsa::LayerKv> scratch;              // per draft layer
  std::unordered_map<int64_t, int32_t> row_of;    // node id -> scratch row
  std::unordered_map<int64_t, int64_t> parent_of; // node id -> parent id
};

namespace {

// Runs the target layer stack over the pass queries. Query 0 must be the
// pending root (commit = true); the rest are tree queries in flat order
// whose scratch row index equals query index - 1.
TargetPassResult run_target_pass(model::ToyModel& m, nsa::KvCache& cache,
                                 std::vector<nsa::CompressedLayer>& cc,
                                 std::vector<PassQuery>& queries,
                                 const plan::StrategyTuple& strategy,
                                 const schedule::LayerRolePlan& plan,
                                 const TraceOptions* topts, StepTrace* trace) {
  const nsa::NsaConfig& cfg = m.spec.nsa;
  const int64_t h = m.spec.hidden;
  const int64_t dh = cfg.d_head;
  const int64_t kvdim = cfg.n_kv_heads * dh;
  const int64_t nq = static_cast<int64_t>(queries.size());
  const int64_t gamma = nq - 1;
  const bool approx = strategy.mode == plan::CoarseningMode::Approximate;

  TargetPassResult res;
  res.per_layer.assign(plan.n_layers, verify::LoadStats{});
  res.scratch.assign(plan.n_layers, nsa::LayerKv(cfg.n_kv_heads, dh));

  const bool want_indices = topts != nullptr && topts->record_indices && trace != nullptr;
  const bool want_dev = topts != nullptr && topts->report_deviation && approx;
  if (want_indices) trace->indices.assign(plan.n_layers, {});

  std::vector<std::vector<float>> hidden(nq, std::vector<float>(h));
  for (int64_t q = 0; q < nq; ++q) m.embed(queries[q].token, queries[q].pos, hidden[q].data());

  const auto groups = verify::partition_groups(gamma, strategy.group_size);

  // selected indices per (layer, query); reuse layers inherit within the pass
  std::vector<std::vector<std::optional<nsa::SelectedIndexSet>>> pass_indices(
      plan.n_layers, std::vector<std::optional<nsa::SelectedIndexSet>>(nq));

  std::vector<float> xn(h), qv_all(nq * h), krow(kvdim), vrow(kvdim);
  std::vector<std::vector<nsa::GateVector>> gates(nq, std::vector<nsa::GateVector>(cfg.n_q_heads));
  std::vector<float> attn_f32(h), proj(h);
  std::vector<float> mlp_a(m.spec.mlp_mult * h), mlp_o(h);

  for (int64_t j = 0; j < plan.n_layers; ++j) {
    const model::LayerWeights& lw = m.layers[j];
    nsa::LayerKv& kv = cache.layers[j];
    nsa::LayerKv& scratch = res.scratch[j];

    // projections; the root's row is appended before any attention so it
    // can see itself through the window branch
    for (int64_t q = 0; q < nq; ++q) {
      rmsnorm(hidden[q].data(), lw.rms_attn.data(), h, xn.data());
      linear(lw.wq.data(), xn.data(), h, h, qv_all.data() + q * h);
      linear(lw.wk.data(), xn.data(), kvdim, h, krow.data());
      linear(lw.wv.data(), xn.data(), kvdim, h, vrow.data());
      if (queries[q].commit) {
        kv.append(krow.data(), vrow.data());
      } else {
        scratch.append(krow.data(), vrow.data());
      }
      const float* qq = qv_all.data() + q * h;
      for (int64_t head = 0; head < cfg.n_q_heads; ++head) {
        const float* qh = qq + head * dh;
        const auto& ker = kernels::active();
        gates[q][head].g_cmp =
            sigmoid(ker.dot_f32(lw.w_gate.data() + 0 * dh, qh, static_cast<size_t>(dh)));
        gates[q][head].g_slc =
            sigmoid(ker.dot_f32(lw.w_gate.data() + 1 * dh, qh, static_cast<size_t>(dh)));
        gates[q][head].g_win =
            sigmoid(ker.dot_f32(lw.w_gate.data() + 2 * dh, qh, static_cast<size_t>(dh)));
      }
    }
    nsa::extend_compressed_layer(cc[j], kv, kv.rows, cfg, m.key_pos_embed.data());

    // routing
    auto route = [&](int64_t q) {
      const int64_t vis = cfg.routing_visible_len(queries[q].pos);
      auto scores = nsa::selection_scores(qv_all.data() + q * h, cc[j], vis, cfg);
      nsa::SelectedIndexSet idx = nsa::select_blocks(scores, cfg.n, vis, cfg);
      idx.query_id = q;
      idx.layer_id = j;
      return idx;
    };
    if (!plan.is_reuse(j)) {
      pass_indices[j][0] = route(0);
      if (!approx || want_dev) {
        // deviation reporting needs every query's own set for comparison;
        // the approximate path still attends with the representative's
        for (int64_t q = 1; q < nq; ++q) pass_indices[j][q] = route(q);
      } else {
        for (const auto& g : groups) {
          std::vector<verify::MemberQuery> probe(g.size());
          for (int64_t i = 0; i < g.size(); ++i) probe[i].pos = queries[1 + g.begin + i].pos;
          const int64_t rep = verify::representative_index(probe);
          pass_indices[j][1 + g.begin + rep] = route(1 + g.begin + rep);
        }
      }
    } else {
      const int64_t src = plan.source[j];
      for (int64_t q = 0; q < nq; ++q) {
        if (!pass_indices[src][q].has_value()) continue;
        auto clamped = schedule::clamp_inherited_indices(
            *pass_indices[src][q], cfg.routing_visible_len(queries[q].pos), cfg);
        clamped.indices.query_id = q;
        clamped.indices.layer_id = j;
        pass_indices[j][q] = std::move(clamped.indices);
      }
    }

    verify::GroupAttendContext ctx{&kv, &cc[j], &cfg};

    // root attends alone; it is a committed query with no tree rows
    std::vector<std::vector<double>> attn_out(nq);
    {
      verify::MemberQuery rm;
      rm.q = qv_all.data();
      rm.pos = queries[0].pos;
      rm.routing_bound = cfg.routing_visible_len(queries[0].pos);
      rm.indices = &*pass_indices[j][0];
      rm.gates = gates[0];
      auto rootres = verify::attend_one(ctx, rm, rm.indices->indices, nullptr);
      attn_out[0] = std::move(rootres.out);
      if (want_indices) {
        trace->indices[j].resize(nq);
        trace->indices[j][0] = *pass_indices[j][0];
      }
    }

    for (const auto& g : groups) {
      std::vector<verify::MemberQuery> members(g.size());
      for (int64_t i = 0; i < g.size(); ++i) {
        const int64_t q = 1 + g.begin + i;
        verify::MemberQuery& mm = members[i];
        mm.q = qv_all.data() + q * h;
        mm.pos = queries[q].pos;
        mm.routing_bound = cfg.routing_visible_len(queries[q].pos);
        mm.indices = pass_indices[j][q].has_value() ? &*pass_indices[j][q] : nullptr;
        mm.gates = gates[q];
        mm.intra.scratch = &scratch;
        mm.intra.admitted = queries[q].admitted;
      }
      verify::GroupResult gres =
          approx ? verify::group_attend_approx(ctx, members) : verify::group_attend_exact(ctx, members);

      if (want_dev) {
        // exact recomputation of the selected branch, deviation only
        for (int64_t i = 0; i < g.size(); ++i) {
          if (members[i].indices == nullptr) continue;
          auto own = nsa::branch_attend_selected(members[i].q, kv, members[i].indices->indices,
                                                 nullptr, members[i].routing_bound, cfg);
          for (int64_t head = 0; head < cfg.n_q_heads; ++head) {
            const auto& ap = gres.members[i].slc[head];
            const auto& ep = own[head];
            double d2 = 0.0;
            for (int64_t x = 0; x < dh; ++x) {
              const double av = ap.empty() ? 0.0 : ap.out[x] / ap.run_den;
              const double ev = ep.empty() ? 0.0 : ep.out[x] / ep.run_den;
              d2 += (av - ev) * (av - ev);
            }
            const double d = std::sqrt(d2);
            res.dev_sum += d;
            res.dev_max = std::max(res.dev_max, d);
            res.dev_count += 1;
          }
        }
      }
      if (want_indices) {
        const int64_t rep = approx ? verify::representative_index(members) : -1;
        for (int64_t i = 0; i < g.size(); ++i) {
          const int64_t q = 1 + g.begin + i;
          trace->indices[j][q] = approx ? *members[rep].indices : *members[i].indices;
        }
      }
      if (plan.is_reuse(j)) gres.stats.index_constructions = 0;
      res.per_layer[j].add(gres.stats);
      for (int64_t i = 0; i < g.size(); ++i)
        attn_out[1 + g.begin + i] = std::move(gres.members[i].out);
    }

    // output projection, residual, mlp
    for (int64_t q = 0; q < nq; ++q) {
      for (int64_t i = 0; i < h; ++i) attn_f32[i] = static_cast<float>(attn_out[q][i]);
      linear(lw.wo.data(), attn_f32.data(), h, h, proj.data());
      for (int64_t i = 0; i < h; ++i) hidden[q][i] += proj[i];

      rmsnorm(hidden[q].data(), lw.rms_mlp.data(), h, xn.data());
      linear(lw.mlp_in.data(), xn.data(), m.spec.mlp_mult * h, h, mlp_a.data());
      for (auto& a : mlp_a) a = a > 0.0f ? a : 0.0f;
      linear(lw.mlp_out.data(), mlp_a.data(), h, m.spec.mlp_mult * h, mlp_o.data());
      for (int64_t i = 0; i < h; ++i) hidden[q][i] += mlp_o[i];
    }
  }

  res.hidden = std::move(hidden);
  return res;
}

// readout: logits = W_out * rmsnorm(hidden) + bigram[token]
std::vector<double> readout_logits(const model::ToyModel& m, const float* hidden, int32_t token) {
  const int64_t h = m.spec.hidden;
  std::vector<float> fin(h);
  rmsnorm(hidden, m.rms_final.data(), h, fin.data());
  const auto& ker = kernels::active();
  const float* brow = m.bigram_row(token);
  std::vector<double> logits(m.spec.vocab);
  for (int64_t v = 0; v < m.spec.vocab; ++v) {
    logits[v] = ker.dot_f32(m.w_out.data() + v * h, fin.data(), static_cast<size_t>(h)) +
                static_cast<double>(brow[v]);
  }
  return logits;
}

}  // namespace

// ---------------------------------------------------------------------
// draft side (dense)

namespace {

// single-token dense forward; appends rows to the committed cache when
// `commit`, otherwise to `scratch` (the caller records the row index)
std::vector<float> dense_forward(model::ToyModel& m, nsa::KvCache& cache, int32_t token,
                                 int64_t pos, bool commit, std::vector<nsa::LayerKv>* scratch,
                                 std::span<const int32_t> chain) {
  const nsa::NsaConfig& cfg = m.spec.nsa;
  const int64_t h = m.spec.hidden;
  const int64_t dh = cfg.d_head;
  const int64_t kvdim = cfg.n_kv_heads * dh;

  std::vector<float> hidden(h), xn(h), qv(h), krow(kvdim), vrow(kvdim);
  std::vector<float> attn_f32(h), proj(h), mlp_a(m.spec.mlp_mult * h), mlp_o(h);
  m.embed(token, pos, hidden.data());

  std::vector<int32_t> admitted(chain.begin(), chain.end());

  for (int64_t j = 0; j < m.spec.n_layers; ++j) {
    const model::LayerWeights& lw = m.layers[j];
    nsa::LayerKv& kv = cache.layers[j];

    rmsnorm(hidden.data(), lw.rms_attn.data(), h, xn.data());
    linear(lw.wq.data(), xn.data(), h, h, qv.data());
    linear(lw.wk.data(), xn.data(), kvdim, h, krow.data());
    linear(lw.wv.data(), xn.data(), kvdim, h, vrow.data());

    nsa::TreeRowsView intra;
    std::vector<int32_t> adm;
    if (commit) {
      kv.append(krow.data(), vrow.data());
    } else {
      (*scratch)[j].append(krow.data(), vrow.data());
      adm = admitted;
      adm.push_back(static_cast<int32_t>((*scratch)[j].rows - 1));
      intra.scratch = &(*scratch)[j];
      intra.admitted = adm;
    }
    auto win = nsa::branch_attend_window(qv.data(), kv, pos, cfg.w, kv.rows,
                                         commit ? nullptr : &intra, cfg);
    for (int64_t head = 0; head < cfg.n_q_heads; ++head) {
      const auto& p = win[head];
      for (int64_t x = 0; x < dh; ++x)
        attn_f32[head * dh + x] =
            p.empty() ? 0.0f : static_cast<float>(p.out[x] / p.run_den);
    }
    linear(lw.wo.data(), attn_f32.data(), h, h, proj.data());
    for (int64_t i = 0; i < h; ++i) hidden[i] += proj[i];

    rmsnorm(hidden.data(), lw.rms_mlp.data(), h, xn.data());
    linear(lw.mlp_in.data(), xn.data(), m.spec.mlp_mult * h, h, mlp_a.data());
    for (auto& a : mlp_a) a = a > 0.0f ? a : 0.0f;
    linear(lw.mlp_out.data(), mlp_a.data(), h, m.spec.mlp_mult * h, mlp_o.data());
    for (int64_t i = 0; i < h; ++i) hidden[i] += mlp_o[i];
  }
  return hidden;
}

}  // namespace

// ---------------------------------------------------------------------
// prefill / commit

void Engine::prefill(std::span<const int32_t> prompt) {
  if (prompt.empty()) throw std::invalid_argument("prefill: empty prompt");
  if (static_cast<int64_t>(prompt.size()) > target_.model.spec.max_context)
    throw std::invalid_argument("prefill: prompt exceeds max context");
  reset();
  const auto plan = schedule::resolve_layer_roles({}, target_.model.spec.n_layers);
  plan::StrategyTuple strict;
  strict.group_size = 1;
  tokens_.push_back(prompt[0]);
  for (size_t t = 1; t < prompt.size(); ++t) {
    std::vector<PassQuery> qs(1);
    qs[0].token = tokens_.back();
    qs[0].pos = static_cast<int64_t>(tokens_.size()) - 1;
    qs[0].commit = true;
    run_target_pass(target_.model, target_.cache, target_.cc, qs, strict, plan, nullptr, nullptr);
    dense_forward(draft_.model, draft_.cache, tokens_.back(), qs[0].pos, true, nullptr, {});
    tokens_.push_back(prompt[t]);
  }
  target_.cache.committed_len = static_cast<int64_t>(tokens_.size());
  draft_.cache.committed_len = target_.cache.committed_len;
}

void Engine::commit_draft_rows(std::span<const int32_t> accepted_tokens) {
  // the draft recomputes accepted tokens as committed rows; dense
  // attention makes this bit-identical to the expansion-time rows
  int64_t pos = draft_.cache.layers.empty() ? 0 : draft_.cache.layers[0].rows;
  for (int32_t tok : accepted_tokens) {
    dense_forward(draft_.model, draft_.cache, tok, pos, true, nullptr, {});
    pos += 1;
  }
}

// ---------------------------------------------------------------------
// draft expansion

tree::DraftTree Engine::expand_tree(const plan::StrategyTuple& strategy) {
  const int64_t c = static_cast<int64_t>(tokens_.size());
  DraftExpansion exp;
  exp.scratch.assign(draft_.model.spec.n_layers,
                     nsa::LayerKv(draft_.model.spec.nsa.n_kv_heads, draft_.model.spec.nsa.d_head));

  // catch the draft cache up when autoregressive steps ran in between
  while (draft_.cache.layers[0].rows < c - 1) {
    const int64_t pos = draft_.cache.layers[0].rows;
    dense_forward(draft_.model, draft_.cache, tokens_[pos], pos, true, nullptr, {});
  }

  auto propose = [&](const tree::DraftNode& node, int64_t k) -> std::vector<tree::TokenScore> {
    exp.parent_of[node.id] = node.parent;
    std::vector<float> hid;
    if (node.id == 0) {
      hid = dense_forward(draft_.model, draft_.cache, node.token, c - 1, true, nullptr, {});
    } else {
      // ancestor scratch rows, ascending depth (root lives in the cache)
      std::vector<int32_t> rev;
      for (int64_t a = node.parent; a != 0; a = exp.parent_of.at(a))
        rev.push_back(exp.row_of.at(a));
      std::vector<int32_t> chain(rev.rbegin(), rev.rend());
      hid = dense_forward(draft_.model, draft_.cache, node.token, c - 1 + node.depth, false,
                          &exp.scratch, chain);
      exp.row_of[node.id] = static_cast<int32_t>(exp.scratch[0].rows - 1);
    }
    auto logits = readout_logits(draft_.model, hid.data(), node.token);

    // top-k by logit, ties to the lower token id
    std::vector<int32_t> idx(logits.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int32_t>(i);
    const size_t kk = std::min<size_t>(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&](int32_t a, int32_t b) {
      if (logits[a] != logits[b]) return logits[a] > logits[b];
      return a < b;
    });
    // log-softmax scores
    double mx = logits[idx[0]];
    double den = 0.0;
    for (double v : logits) den += std::exp(v - mx);
    const double lse = mx + std::log(den);
    std::vector<tree::TokenScore> out;
    for (size_t i = 0; i < kk; ++i)
      out.push_back(tree::TokenScore{idx[i], logits[idx[i]] - lse});
    return out;
  };

  return tree::expand_draft_tree(tokens_.back(), propose, strategy.depth, strategy.width,
                                 strategy.budget);
}

// ---------------------------------------------------------------------
// step

StepOutcome Engine::step(const plan::StrategyTuple& strategy, bool autoregressive,
                         const TraceOptions* topts, StepTrace* trace) {
  const auto t0 = Clock::now();
  if (tokens_.empty()) throw std::invalid_argument("step: prefill first");
  const nsa::NsaConfig& cfg = target_.model.spec.nsa;
  const int64_t c = static_cast<int64_t>(tokens_.size());

  if (!autoregressive) {
    if (strategy.depth > cfg.routing_lag)
      throw std::invalid_argument("step: draft depth exceeds routing lag");
    if (c + strategy.depth + 1 > target_.model.spec.max_context)
      throw std::invalid_argument("step: context overflow");
  } else if (c + 1 > target_.model.spec.max_context) {
    throw std::invalid_argument("step: context overflow");
  }

  const auto plan = schedule::resolve_layer_roles(strategy.reuse_set,
                                                  target_.model.spec.n_layers);

  tree::DraftTree dtree;
  tree::FlatBatch batch;
  if (!autoregressive) {
    dtree = expand_tree(strategy);
    batch = tree::flatten_tree(dtree, strategy.traversal, c);
  } else {
    dtree.nodes.push_back(tree::DraftNode{0, tree::kNoParent, tokens_.back(), 0, 0.0, 0.0});
    dtree.children.emplace_back();
  }
  const int64_t gamma = batch.gamma;

  std::vector<PassQuery> queries(1 + gamma);
  queries[0].token = tokens_.back();
  queries[0].pos = c - 1;
  queries[0].commit = true;
  for (int64_t i = 0; i < gamma; ++i) {
    PassQuery& q = queries[1 + i];
    q.token = dtree.nodes[batch.order[i]].token;
    q.pos = batch.positions[i];
    for (int64_t jj = 0; jj < gamma; ++jj)
      if (batch.mask[i][jj]) q.admitted.push_back(static_cast<int32_t>(jj));
  }

  TargetPassResult pres = run_target_pass(target_.model, target_.cache, target_.cc, queries,
                                          strategy, plan, topts, trace);

  // per-node argmax (query 0 = root = node 0; flat query 1+i = order[i])
  std::vector<int32_t> argmax(dtree.nodes.size(), 0);
  const bool want_logits = topts != nullptr && topts->record_logits && trace != nullptr;
  for (int64_t q = 0; q < 1 + gamma; ++q) {
    const int64_t node = q == 0 ? 0 : batch.order[q - 1];
    auto logits = readout_logits(target_.model, pres.hidden[q].data(), queries[q].token);
    argmax[node] = argmax_token(logits);
    if (want_logits) {
      std::vector<float> lf(logits.size());
      for (size_t i = 0; i < logits.size(); ++i) lf[i] = static_cast<float>(logits[i]);
      trace->logits.push_back(std::move(lf));
    }
  }

  const tree::VerifyResult vr = tree::greedy_verify(dtree, argmax);

  // commit: accepted scratch rows, then the bonus token (rows pending)
  std::vector<int64_t> flat_slot(dtree.nodes.size(), -1);
  for (int64_t i = 0; i < gamma; ++i) flat_slot[batch.order[i]] = i;
  for (int64_t node : vr.accepted_nodes) {
    const int64_t slot = flat_slot[node];
    assert(slot >= 0);
    for (int64_t j = 0; j < target_.model.spec.n_layers; ++j) {
      target_.cache.layers[j].append(pres.scratch[j].k_row_all(slot),
                                     pres.scratch[j].v_row_all(slot));
    }
    tokens_.push_back(dtree.nodes[node].token);
  }
  if (!autoregressive) commit_draft_rows(vr.accepted_tokens);
  tokens_.push_back(vr.bonus_token);
  target_.cache.committed_len = static_cast<int64_t>(tokens_.size());
  draft_.cache.committed_len = static_cast<int64_t>(tokens_.size());

  StepOutcome out;
  out.gamma = gamma;
  out.accepted = vr.accepted_count();
  out.committed = vr.accepted_tokens;
  out.committed.push_back(vr.bonus_token);
  out.per_layer = std::move(pres.per_layer);
  out.accounting = cost::account_step(out.per_layer, plan);
  out.modeled_latency = cost::estimate_latency(out.accounting, coeffs_);
  out.wall_seconds = seconds_since(t0);
  if (trace != nullptr && pres.dev_count > 0) {
    trace->selected_dev_mean = pres.dev_sum / static_cast<double>(pres.dev_count);
    trace->selected_dev_max = pres.dev_max;
  }
  return out;
}

std::vector<std::vector<float>> Engine::forced_hidden_states(
    std::span<const int32_t> forced, const schedule::LayerRolePlan& plan) {
  std::vector<std::vector<float>> states;
  plan::StrategyTuple strict;
  strict.group_size = 1;
  strict.reuse_set = plan.reuse_set;
  for (int32_t tok : forced) {
    std::vector<PassQuery> qs(1);
    qs[0].token = tokens_.back();
    qs[0].pos = static_cast<int64_t>(tokens_.size()) - 1;
    qs[0].commit = true;
    auto pres = run_target_pass(target_.model, target_.cache, target_.cc, qs, strict, plan,
                                nullptr, nullptr);
    const int64_t h = target_.model.spec.hidden;
    std::vector<float> fin(h);
    rmsnorm(pres.hidden[0].data(), target_.model.rms_final.data(), h, fin.data());
    states.push_back(std::move(fin));
    tokens_.push_back(tok);
    target_.cache.committed_len = static_cast<int64_t>(tokens_.size());
  }
  return states;
}

// ---------------------------------------------------------------------
// decode loops

double DecodeResult::throughput() const {
  double sa = 0.0, st = 0.0;
  for (const auto& m : metrics) {
    sa += m.accepted;
    st += m.latency;
  }
  return st > 0.0 ? sa / st : 0.0;
}

std::vector<int32_t> decode_autoregressive(Engine& engine, std::span<const int32_t> prompt,
                                           int64_t steps) {
  engine.prefill(prompt);
  plan::StrategyTuple strict;
  strict.group_size = 1;
  std::vector<int32_t> out;
  for (int64_t t = 0; t < steps; ++t) {
    const StepOutcome so = engine.step(strict, /*autoregressive=*/true);
    out.push_back(so.committed.back());
  }
  return out;
}

DecodeResult decode_speculative(Engine& engine, std::span<const int32_t> prompt,
                                const DecodeOptions& opts) {
  DecodeResult res;
  engine.prefill(prompt);

  plan::StrategyTuple active = opts.strategy;
  if (opts.cls) plan::validate_strategy(active, *opts.cls);

  const plan::ProfileEntry* entry = nullptr;
  plan::RefinerState guard;
  if (opts.profile != nullptr && opts.cls) {
    entry = &opts.profile->at(plan::bucket_of(engine.context_len()), *opts.cls);
    if (opts.strategy_from_profile) {
      active = entry->candidates.front().strategy;
      res.strategy_log.push_back("step 0: preselect " + active.to_string());
    }
    if (opts.profile->has_coeffs) engine.set_coeffs(opts.profile->coeffs);
  }
  if (opts.refine && entry == nullptr)
    throw std::invalid_argument("decode: refinement requires a profile and a class");

  int64_t committed = 0;
  int64_t step_index = 0;
  while (committed < opts.steps) {
    step_index += 1;
    StepTrace trace;
    const bool want_trace = opts.trace_options.record_indices ||
                            opts.trace_options.record_logits ||
                            opts.trace_options.report_deviation;
    StepOutcome so =
        engine.step(active, /*autoregressive=*/false,
                    want_trace ? &opts.trace_options : nullptr, want_trace ? &trace : nullptr);
    committed += so.accepted;

    plan::StepMetrics sm;
    sm.accepted = static_cast<double>(so.accepted);
    sm.latency = opts.time_base == TimeBase::Wall ? so.wall_seconds : so.modeled_latency;
    res.metrics.push_back(sm);
    res.outcomes.push_back(std::move(so));
    if (want_trace) res.traces.push_back(std::move(trace));

    if (opts.refine && step_index <= opts.early_window && !guard.settled) {
      const auto decision = plan::refine_step(guard, sm, *entry);
      if (decision.switched || decision.settled_now) {
        if (decision.settled_now)
          res.settle_events += 1;
        else
          res.refine_events += 1;
        active = entry->candidates[decision.active_rank].strategy;
        if (opts.cls) plan::validate_strategy(active, *opts.cls);
        res.strategy_log.push_back("step " + std::to_string(step_index) +
                                   (decision.settled_now ? ": settle " : ": switch ") +
                                   active.to_string());
      }
    } else if (opts.guard_bookkeeping && entry != nullptr && !opts.refine) {
      // guard statistics without refinement decisions
      if (!guard.ema_primed) {
        guard.ema = sm.accepted;
        guard.ema_primed = true;
      } else {
        guard.ema = guard.consts.alpha * sm.accepted + (1.0 - guard.consts.alpha) * guard.ema;
      }
      guard.steps_seen += 1;
      const double expected = entry->candidates.front().exp_accepted;
      if (guard.steps_seen > guard.consts.warmup && guard.ema < guard.consts.rho * expected)
        guard.below_count += 1;
      else
        guard.below_count = 0;
    }
  }

  res.committed.assign(engine.tokens().end() - committed, engine.tokens().end());
  res.generated.assign(res.committed.begin(), res.committed.begin() + opts.steps);
  return res;
}

schedule::CalibrationResult calibrate_reuse_schedule(Engine& engine,
                                                     std::span<const std::vector<int32_t>> prompts,
                                                     int64_t forced_tokens, double tolerance) {
  if (prompts.empty())
    throw std::invalid_argument("calibrate_reuse_schedule: need at least one prompt");
  if (tolerance <= 0.0) throw std::invalid_argument("calibrate_reuse_schedule: tolerance must be > 0");

  const int64_t L = engine.target().spec.n_layers;

  // teacher sequences and baseline hidden states under all-refresh
  std::vector<std::vector<int32_t>> forced;
  std::vector<std::vector<std::vector<float>>> baseline;
  for (const auto& prompt : prompts) {
    forced.push_back(decode_autoregressive(engine, prompt, forced_tokens));
    engine.prefill(prompt);
    baseline.push_back(
        engine.forced_hidden_states(forced.back(), schedule::resolve_layer_roles({}, L)));
  }

  auto deviation_of = [&](std::span<const int64_t> reuse_set) {
    const auto plan = schedule::resolve_layer_roles(reuse_set, L);
    double sum = 0.0;
    int64_t count = 0;
    for (size_t p = 0; p < prompts.size(); ++p) {
      engine.prefill(prompts[p]);
      const auto states = engine.forced_hidden_states(forced[p], plan);
      for (size_t t = 0; t < states.size(); ++t) {
        double d2 = 0.0, b2 = 0.0;
        for (size_t i = 0; i < states[t].size(); ++i) {
          const double d = static_cast<double>(states[t][i]) - baseline[p][t][i];
          d2 += d * d;
          b2 += static_cast<double>(baseline[p][t][i]) * baseline[p][t][i];
        }
        sum += std::sqrt(d2) / (std::sqrt(b2) + 1e-12);
        count += 1;
      }
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
  };

  return schedule::greedy_reuse_calibration(L, tolerance, deviation_of);
}

std::vector<int32_t> synthetic_prompt(uint64_t seed, int64_t length) {
  Rng rng(seed);
  std::vector<int32_t> out(length);
  for (auto& t : out) t = static_cast<int32_t>(rng.next_below(256));
  return out;
}

}  // namespace specsv::engine
