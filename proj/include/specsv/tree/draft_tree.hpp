// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace specsv::tree {

inline constexpr int64_t kNoParent = -1;

struct DraftNode {
  int64_t id = 0;
  int64_t parent = kNoParent;
  int32_t token = 0;
  int32_t depth = 0;      // root = 0
  double score = 0.0;     // draft log-probability of this token
  double cum_score = 0.0; // path sum of scores; root = 0
};

// Candidate tree. nodes[0] is the root and holds the last committed token.
struct DraftTree {
  std::vector<DraftNode> nodes;
  std::vector<std::vector<int64_t>> children;  // by node id, in proposal order

  int64_t gamma() const { return static_cast<int64_t>(nodes.size()) - 1; }
  bool is_ancestor_or_self(int64_t anc, int64_t node) const;
};

enum class Traversal { BFS, DFS };

std::string to_string(Traversal t);
std::optional<Traversal> traversal_from_string(std::string_view s);

// Flattened verifier batch, root excluded.
struct FlatBatch {
  Traversal traversal = Traversal::BFS;
  std::vector<int64_t> order;               // node ids
  std::vector<int64_t> positions;           // committed_len - 1 + depth
  std::vector<std::vector<bool>> mask;      // row i admits column j iff
                                            // order[j] is ancestor-or-self of order[i]
  int64_t gamma = 0;
};

struct TokenScore {
  int32_t token = 0;
  double score = 0.0;  // log-probability
};

// Proposal callback. Called once per materialized node, root first and
// parents before children; returns the draft model's top-k continuations
// of that node (distinct tokens, descending score).
using ProposeFn = std::function<std::vector<TokenScore>(const DraftNode& node, int64_t k)>;

// Expands up to depth `D` with branching width `k`. Nodes materialize
// best-first by cumulative score (ties by proposal order); parents always
// materialize before their children, so a budget keeps the
// highest-scoring nodes while preserving ancestor closure. Without a
// budget the full k-ary expansion is grown.
DraftTree expand_draft_tree(int32_t root_token, const ProposeFn& propose, int64_t D, int64_t k,
                            std::optional<int64_t> budget = std::nullopt);

// BFS: level order with siblings adjacent; DFS: preorder with parent and
// first child adjacent. Sibling order is (score desc, id asc) in both.
// Fills order, positions, mask and gamma.
FlatBatch flatten_tree(const DraftTree& tree, Traversal traversal, int64_t committed_len);

// Ancestor-or-self mask for an explicit ordering of the tree's non-root nodes.
std::vector<std::vector<bool>> build_tree_mask(const DraftTree& tree,
                                               std::span<const int64_t> order);

struct VerifyResult {
  std::vector<int64_t> accepted_nodes;   // root-to-leaf path, root excluded
  std::vector<int32_t> accepted_tokens;  // tokens of accepted_nodes
  int32_t bonus_token = 0;               // target argmax at the last accepted node (or root)
  int64_t accepted_count() const {       // A_t, bonus included
    return static_cast<int64_t>(accepted_tokens.size()) + 1;
  }
};

// Greedy accept walk at temperature zero. `target_argmax` maps node id to
// the target model's argmax token at that node; it must cover the root and
// every node.
VerifyResult greedy_verify(const DraftTree& tree, std::span<const int32_t> target_argmax);

// JSON fixture form: {"nodes":[{id,parent,token,depth,score}...]}
std::string tree_to_json(const DraftTree& tree);
DraftTree tree_from_json(const std::string& text);

}  // namespace specsv::tree
