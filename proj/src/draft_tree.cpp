// Copyright (c) 2026 the specsv authors
// SPDX-License-Identifier: Apache-2.0
#include "specsv/tree/draft_tree.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace specsv::tree {

bool DraftTree::is_ancestor_or_self(int64_t anc, int64_t node) const {
  for (int64_t cur = node; cur != kNoParent; cur = nodes[cur].parent) {
    if (cur == anc) return true;
  }
  return false;
}

std::string to_string(Traversal t) { return t == Traversal::BFS ? "BFS" : "DFS"; }

std::optional<Traversal> traversal_from_string(std::string_view s) {
  if (s == "BFS" || s == "bfs") return Traversal::BFS;
  if (s == "DFS" || s == "dfs") return Traversal::DFS;
  return std::nullopt;
}

namespace {

struct Candidate {
  int64_t parent;
  int32_t token;
  int32_t depth;
  double score;
  double cum_score;
  int64_t seq;  // creation order, the deterministic tie-break
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.cum_score != b.cum_score) return a.cum_score > b.cum_score;
  return a.seq < b.seq;
}

}  // namespace

DraftTree expand_draft_tree(int32_t root_token, const ProposeFn& propose, int64_t D, int64_t k,
                            std::optional<int64_t> budget) {
  if (D < 1 || k < 1) throw std::invalid_argument("expand_draft_tree: D and k must be >= 1");
  DraftTree tree;
  tree.nodes.push_back(DraftNode{0, kNoParent, root_token, 0, 0.0, 0.0});
  tree.children.emplace_back();

  int64_t seq = 0;
  std::vector<Candidate> frontier;
  auto propose_children = [&](int64_t node_id) {
    const DraftNode& node = tree.nodes[node_id];
    if (node.depth >= D) return;
    auto top = propose(node, k);
    assert(static_cast<int64_t>(top.size()) <= k);
    for (const TokenScore& ts : top) {
      frontier.push_back(Candidate{node_id, ts.token, static_cast<int32_t>(node.depth + 1),
                                   ts.score, node.cum_score + ts.score, seq++});
    }
  };

  propose_children(0);
  const int64_t cap = budget.value_or(std::numeric_limits<int64_t>::max());
  while (!frontier.empty() && tree.gamma() < cap) {
    auto it = std::min_element(frontier.begin(), frontier.end(),
                               [](const Candidate& a, const Candidate& b) { return better(a, b); });
    Candidate c = *it;
    frontier.erase(it);
    const int64_t id = static_cast<int64_t>(tree.nodes.size());
    tree.nodes.push_back(DraftNode{id, c.parent, c.token, c.depth, c.score, c.cum_score});
    tree.children.emplace_back();
    tree.children[c.parent].push_back(id);
    propose_children(id);
  }
  return tree;
}

FlatBatch flatten_tree(const DraftTree& tree, Traversal traversal, int64_t committed_len) {
  FlatBatch batch;
  batch.traversal = traversal;

  auto sorted_children = [&](int64_t id) {
    std::vector<int64_t> ch = tree.children[id];
    std::sort(ch.begin(), ch.end(), [&](int64_t a, int64_t b) {
      if (tree.nodes[a].score != tree.nodes[b].score)
        return tree.nodes[a].score > tree.nodes[b].score;
      return a < b;
    });
    return ch;
  };

  if (traversal == Traversal::BFS) {
    std::deque<int64_t> queue{0};
    while (!queue.empty()) {
      const int64_t id = queue.front();
      queue.pop_front();
      if (id != 0) batch.order.push_back(id);
      for (int64_t c : sorted_children(id)) queue.push_back(c);
    }
  } else {
    std::vector<int64_t> stack{0};
    while (!stack.empty()) {
      const int64_t id = stack.back();
      stack.pop_back();
      if (id != 0) batch.order.push_back(id);
      auto ch = sorted_children(id);
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
  }

  batch.gamma = static_cast<int64_t>(batch.order.size());
  batch.positions.reserve(batch.order.size());
  for (int64_t id : batch.order) {
    batch.positions.push_back(committed_len - 1 + tree.nodes[id].depth);
  }
  batch.mask = build_tree_mask(tree, batch.order);
  return batch;
}

std::vector<std::vector<bool>> build_tree_mask(const DraftTree& tree,
                                               std::span<const int64_t> order) {
  const size_t n = order.size();
  std::vector<int64_t> slot_of(tree.nodes.size(), -1);
  for (size_t i = 0; i < n; ++i) slot_of[order[i]] = static_cast<int64_t>(i);

  std::vector<std::vector<bool>> mask(n, std::vector<bool>(n, false));
  for (size_t i = 0; i < n; ++i) {
    for (int64_t cur = order[i]; cur != kNoParent; cur = tree.nodes[cur].parent) {
      if (cur == 0) break;  // root is not part of the batch
      assert(slot_of[cur] >= 0);
      mask[i][slot_of[cur]] = true;
    }
  }
  return mask;
}

VerifyResult greedy_verify(const DraftTree& tree, std::span<const int32_t> target_argmax) {
  if (target_argmax.size() < tree.nodes.size())
    throw std::invalid_argument("greedy_verify: argmax missing for some nodes");
  VerifyResult res;
  int64_t cur = 0;
  for (;;) {
    const int32_t want = target_argmax[cur];
    int64_t next = kNoParent;
    for (int64_t c : tree.children[cur]) {
      if (tree.nodes[c].token == want) {
        next = c;
        break;  // sibling tokens are distinct, at most one can match
      }
    }
    if (next == kNoParent) break;
    res.accepted_nodes.push_back(next);
    res.accepted_tokens.push_back(tree.nodes[next].token);
    cur = next;
  }
  res.bonus_token = target_argmax[cur];
  return res;
}

std::string tree_to_json(const DraftTree& tree) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const DraftNode& n : tree.nodes) {
    j["nodes"].push_back({{"id", n.id},
                          {"parent", n.parent},
                          {"token", n.token},
                          {"depth", n.depth},
                          {"score", n.score}});
  }
  j["gamma"] = tree.gamma();
  return j.dump(2);
}

DraftTree tree_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DraftTree tree;
  for (const auto& jn : j.at("nodes")) {
    DraftNode n;
    n.id = jn.at("id").get<int64_t>();
    n.parent = jn.at("parent").get<int64_t>();
    n.token = jn.at("token").get<int32_t>();
    n.depth = jn.at("depth").get<int32_t>();
    n.score = jn.at("score").get<double>();
    if (static_cast<int64_t>(tree.nodes.size()) != n.id)
      throw std::invalid_argument("tree_from_json: ids must be dense and ordered");
    tree.nodes.push_back(n);
    tree.children.emplace_back();
  }
  for (DraftNode& n : tree.nodes) {
    if (n.parent != kNoParent) {
      tree.children[n.parent].push_back(n.id);
      n.cum_score = tree.nodes[n.parent].cum_score + n.score;
    }
  }
  return tree;
}

}  // namespace specsv::tree
