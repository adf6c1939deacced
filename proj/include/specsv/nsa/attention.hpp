// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "specsv/nsa/cache.hpp"
#include "specsv/nsa/config.hpp"
#include "specsv/nsa/types.hpp"

namespace specsv::nsa {

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

// selection blocks intersecting [0, visible_len)
inline int64_t selection_block_count(int64_t visible_len, const NsaConfig& cfg) {
  return visible_len > 0 ? ceil_div(visible_len, cfg.l_sel) : 0;
}

// Routing scores: softmax attention mass of the query against visible
// compressed-block keys, averaged over query heads (each head scores its
// own KV head's blocks), then redistributed to selection blocks in
// proportion to token-range overlap. Zero visible compressed blocks yield
// an all-zero vector.
//
// `q` holds n_q_heads * d_head floats, head-major.
std::vector<double> selection_scores(const float* q, const CompressedLayer& cc,
                                     int64_t visible_len, const NsaConfig& cfg);

// Top-n selection over per-block scores. Always includes the forced set
// (block 0 plus the two most recent blocks intersecting the visible
// range), then the best-scoring remaining blocks; score ties go to the
// lower block id. Result is ascending.
SelectedIndexSet select_blocks(const std::vector<double>& scores, int64_t n,
                               int64_t visible_len, const NsaConfig& cfg);

// mandatory initial/local blocks for a visible range
std::vector<int64_t> forced_blocks(int64_t visible_len, const NsaConfig& cfg);

// same selection with an explicit forced set
SelectedIndexSet select_blocks(const std::vector<double>& scores, int64_t n, int64_t visible_len,
                               const NsaConfig& cfg, std::span<const int64_t> forced);

// Compression branch: online-softmax attention over compressed blocks
// fully contained in [0, visible_len). One partial per query head.
std::vector<BranchPartial> branch_attend_compressed(const float* q, const CompressedLayer& cc,
                                                    int64_t visible_len, const NsaConfig& cfg);

// Selection branch over an explicit block list (ascending). Tokens at or
// beyond `token_bound` are masked, as are all tokens of blocks whose
// ownership entry is false (ownership == nullptr means all owned). The
// masked-out entries contribute exactly nothing, which makes masking
// bit-identical to dropping the block from the list.
std::vector<BranchPartial> branch_attend_selected(const float* q, const LayerKv& kv,
                                                  std::span<const int64_t> blocks,
                                                  const std::vector<bool>* ownership,
                                                  int64_t token_bound, const NsaConfig& cfg);

inline std::vector<BranchPartial> branch_attend_selected(const float* q, const LayerKv& kv,
                                                         const SelectedIndexSet& idx,
                                                         int64_t token_bound,
                                                         const NsaConfig& cfg) {
  return branch_attend_selected(q, kv, idx.indices, nullptr, token_bound, cfg);
}

// Draft rows attended by the window branch of one query: scratch rows
// admitted by the query's tree-mask row, ascending in position.
struct TreeRowsView {
  const LayerKv* scratch = nullptr;
  std::span<const int32_t> admitted;
};

// Window branch: dense causal attention over committed tokens
// [max(0, pos - w + 1), min(pos, committed_len - 1)], followed by the
// mask-admitted draft rows. Accumulation is ascending in absolute
// position, so a draft query sees exactly the order a committed query at
// the same position would.
std::vector<BranchPartial> branch_attend_window(const float* q, const LayerKv& kv, int64_t pos,
                                                int64_t w, int64_t committed_len,
                                                const TreeRowsView* intra, const NsaConfig& cfg);

// Streaming-softmax update with one key: logit must be finite.
void online_update(BranchPartial& p, double logit, const float* v_row, int64_t d_head);

// Merge of partials computed over disjoint key sets. Commutative at the
// bit level; merging with an empty partial returns the other operand.
BranchPartial merge_partials(const BranchPartial& a, const BranchPartial& b);

// g_cmp * norm(cmp) + g_slc * norm(slc) + g_win * norm(win), where norm
// divides the accumulator by its softmax denominator and an empty partial
// contributes zero regardless of its gate.
std::vector<double> gated_combine(const BranchPartial& cmp, const BranchPartial& slc,
                                  const BranchPartial& win, const GateVector& g);

}  // namespace specsv::nsa
