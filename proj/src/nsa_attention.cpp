// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/nsa/attention.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "specsv/kernels.hpp"

namespace specsv::nsa {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logit_scale(const NsaConfig& cfg) {
  return 1.0 / std::sqrt(static_cast<double>(cfg.d_head));
}
}  // namespace

void online_update(BranchPartial& p, double logit, const float* v_row, int64_t d_head) {
  const auto& ker = kernels::active();
  const size_t dim = static_cast<size_t>(d_head);
  if (logit <= p.run_max) {
    const double w = std::exp(logit - p.run_max);
    p.run_den += w;
    ker.axpy_f32(w, v_row, p.out.data(), dim);
  } else {
    const double scale = std::exp(p.run_max - logit);  // 0 when the state is empty
    p.run_den = p.run_den * scale + 1.0;
    ker.scale_f64(scale, p.out.data(), dim);
    ker.axpy_f32(1.0, v_row, p.out.data(), dim);
    p.run_max = logit;
  }
}

std::vector<double> selection_scores(const float* q, const CompressedLayer& cc,
                                     int64_t visible_len, const NsaConfig& cfg) {
  const int64_t sel_count = selection_block_count(visible_len, cfg);
  std::vector<double> sel_scores(static_cast<size_t>(sel_count), 0.0);
  const int64_t m = cc.visible_blocks(visible_len, cfg);
  if (m == 0) return sel_scores;

  const auto& ker = kernels::active();
  const double scale = logit_scale(cfg);
  const int64_t group = cfg.gqa_group_size();

  std::vector<double> mass(static_cast<size_t>(m), 0.0);
  std::vector<double> logits(static_cast<size_t>(m));
  for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
    const float* qh = q + h * cfg.d_head;
    const int64_t kvh = h / group;
    double mx = kNegInf;
    for (int64_t i = 0; i < m; ++i) {
      logits[i] = ker.dot_f32(qh, cc.k_block(kvh, i), static_cast<size_t>(cfg.d_head)) * scale;
      mx = std::max(mx, logits[i]);
    }
    double den = 0.0;
    for (int64_t i = 0; i < m; ++i) den += std::exp(logits[i] - mx);
    for (int64_t i = 0; i < m; ++i) mass[i] += std::exp(logits[i] - mx) / den;
  }
  const double inv_heads = 1.0 / static_cast<double>(cfg.n_q_heads);

  // redistribute per-compression-block mass to selection blocks by
  // token-range overlap (each block's range spans exactly l tokens)
  for (int64_t i = 0; i < m; ++i) {
    const int64_t lo = i * cfg.d;
    const int64_t hi = lo + cfg.l;
    for (int64_t b = lo / cfg.l_sel; b * cfg.l_sel < hi; ++b) {
      const int64_t olo = std::max(lo, b * cfg.l_sel);
      const int64_t ohi = std::min(hi, (b + 1) * cfg.l_sel);
      if (ohi <= olo) continue;
      assert(b < sel_count);
      sel_scores[b] += mass[i] * inv_heads * static_cast<double>(ohi - olo) /
                       static_cast<double>(cfg.l);
    }
  }
  return sel_scores;
}

std::vector<int64_t> forced_blocks(int64_t visible_len, const NsaConfig& cfg) {
  const int64_t avail = selection_block_count(visible_len, cfg);
  if (avail == 0) return {};
  std::vector<int64_t> forced;
  forced.push_back(0);
  if (avail - 2 > 0) forced.push_back(avail - 2);
  if (avail - 1 > 0) forced.push_back(avail - 1);
  std::sort(forced.begin(), forced.end());
  forced.erase(std::unique(forced.begin(), forced.end()), forced.end());
  return forced;
}

SelectedIndexSet select_blocks(const std::vector<double>& scores, int64_t n,
                               int64_t visible_len, const NsaConfig& cfg) {
  const auto forced = forced_blocks(visible_len, cfg);
  return select_blocks(scores, n, visible_len, cfg, forced);
}

SelectedIndexSet select_blocks(const std::vector<double>& scores, int64_t n, int64_t visible_len,
                               const NsaConfig& cfg, std::span<const int64_t> forced) {
  SelectedIndexSet out;
  const int64_t avail = selection_block_count(visible_len, cfg);
  if (avail == 0) return out;
  assert(static_cast<int64_t>(scores.size()) >= avail);

  const int64_t target = std::min(n, avail);
  std::vector<bool> is_forced(static_cast<size_t>(avail), false);
  std::vector<int64_t> chosen;
  for (int64_t b : forced) {
    if (b >= 0 && b < avail && !is_forced[b]) {
      is_forced[b] = true;
      chosen.push_back(b);
    }
  }

  std::vector<int64_t> rest;
  for (int64_t b = 0; b < avail; ++b)
    if (!is_forced[b]) rest.push_back(b);
  std::sort(rest.begin(), rest.end(), [&](int64_t a, int64_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  for (int64_t b : rest) {
    if (static_cast<int64_t>(chosen.size()) >= target) break;
    chosen.push_back(b);
  }
  std::sort(chosen.begin(), chosen.end());

  out.indices = std::move(chosen);
  out.forced.resize(out.indices.size(), false);
  for (size_t i = 0; i < out.indices.size(); ++i)
    out.forced[i] = is_forced[out.indices[i]];
  return out;
}

std::vector<BranchPartial> branch_attend_compressed(const float* q, const CompressedLayer& cc,
                                                    int64_t visible_len, const NsaConfig& cfg) {
  const auto& ker = kernels::active();
  const double scale = logit_scale(cfg);
  const int64_t group = cfg.gqa_group_size();
  const int64_t m = cc.visible_blocks(visible_len, cfg);

  std::vector<BranchPartial> parts;
  parts.reserve(static_cast<size_t>(cfg.n_q_heads));
  for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
    BranchPartial p(cfg.d_head);
    const float* qh = q + h * cfg.d_head;
    const int64_t kvh = h / group;
    for (int64_t i = 0; i < m; ++i) {
      const double logit =
          ker.dot_f32(qh, cc.k_block(kvh, i), static_cast<size_t>(cfg.d_head)) * scale;
      online_update(p, logit, cc.v_block(kvh, i), cfg.d_head);
    }
    parts.push_back(std::move(p));
  }
  return parts;
}

std::vector<BranchPartial> branch_attend_selected(const float* q, const LayerKv& kv,
                                                  std::span<const int64_t> blocks,
                                                  const std::vector<bool>* ownership,
                                                  int64_t token_bound, const NsaConfig& cfg) {
  const auto& ker = kernels::active();
  const double scale = logit_scale(cfg);
  const int64_t group = cfg.gqa_group_size();
  const int64_t bound = std::min(token_bound, kv.rows);

  std::vector<BranchPartial> parts;
  parts.reserve(static_cast<size_t>(cfg.n_q_heads));
  for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
    BranchPartial p(cfg.d_head);
    const float* qh = q + h * cfg.d_head;
    const int64_t kvh = h / group;
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
      if (ownership != nullptr && !(*ownership)[bi]) continue;  // -inf masked
      const int64_t lo = blocks[bi] * cfg.l_sel;
      const int64_t hi = std::min(lo + cfg.l_sel, bound);
      for (int64_t t = lo; t < hi; ++t) {
        const double logit =
            ker.dot_f32(qh, kv.k_row(kvh, t), static_cast<size_t>(cfg.d_head)) * scale;
        online_update(p, logit, kv.v_row(kvh, t), cfg.d_head);
      }
    }
    parts.push_back(std::move(p));
  }
  return parts;
}

std::vector<BranchPartial> branch_attend_window(const float* q, const LayerKv& kv, int64_t pos,
                                                int64_t w, int64_t committed_len,
                                                const TreeRowsView* intra, const NsaConfig& cfg) {
  const auto& ker = kernels::active();
  const double scale = logit_scale(cfg);
  const int64_t group = cfg.gqa_group_size();
  const int64_t lo = std::max<int64_t>(0, pos - w + 1);
  const int64_t hi = std::min(pos, committed_len - 1);  // inclusive

  std::vector<BranchPartial> parts;
  parts.reserve(static_cast<size_t>(cfg.n_q_heads));
  for (int64_t h = 0; h < cfg.n_q_heads; ++h) {
    BranchPartial p(cfg.d_head);
    const float* qh = q + h * cfg.d_head;
    const int64_t kvh = h / group;
    for (int64_t t = lo; t <= hi; ++t) {
      const double logit =
          ker.dot_f32(qh, kv.k_row(kvh, t), static_cast<size_t>(cfg.d_head)) * scale;
      online_update(p, logit, kv.v_row(kvh, t), cfg.d_head);
    }
    if (intra != nullptr) {
      for (int32_t r : intra->admitted) {
        const double logit =
            ker.dot_f32(qh, intra->scratch->k_row(kvh, r), static_cast<size_t>(cfg.d_head)) *
            scale;
        online_update(p, logit, intra->scratch->v_row(kvh, r), cfg.d_head);
      }
    }
    parts.push_back(std::move(p));
  }
  return parts;
}

BranchPartial merge_partials(const BranchPartial& a, const BranchPartial& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  assert(a.out.size() == b.out.size());
  BranchPartial r(static_cast<int64_t>(a.out.size()));
  r.run_max = std::max(a.run_max, b.run_max);
  const double sa = std::exp(a.run_max - r.run_max);
  const double sb = std::exp(b.run_max - r.run_max);
  r.run_den = a.run_den * sa + b.run_den * sb;
  for (size_t i = 0; i < r.out.size(); ++i) {
    r.out[i] = a.out[i] * sa + b.out[i] * sb;
  }
  return r;
}

std::vector<double> gated_combine(const BranchPartial& cmp, const BranchPartial& slc,
                                  const BranchPartial& win, const GateVector& g) {
  const size_t dim = std::max({cmp.out.size(), slc.out.size(), win.out.size()});
  std::vector<double> out(dim, 0.0);
  auto add = [&](const BranchPartial& p, double gate) {
    if (p.empty()) return;
    for (size_t i = 0; i < dim; ++i) out[i] += gate * (p.out[i] / p.run_den);
  };
  add(cmp, g.g_cmp);
  add(slc, g.g_slc);
  add(win, g.g_win);
  return out;
}

}  // namespace specsv::nsa
