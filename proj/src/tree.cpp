#include "specexec/tree.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace specexec {

// ---------------------------------------------------------------------------
// DraftTree

DraftTree::DraftTree(Prefix root_prefix) : root_prefix_(std::move(root_prefix)) {
  nodes_.emplace_back();
  draft_dists_.emplace_back();
  draw_orders_.emplace_back();
}

NodeId DraftTree::add_child(NodeId parent, TokenId token, double edge_logprob) {
  const auto& p = node(parent);
  if (!(edge_logprob <= 0.0) || !std::isfinite(edge_logprob)) {
    throw std::invalid_argument("tree: edge log-probability must be finite and <= 0");
  }
  if (token < 0) throw std::invalid_argument("tree: token ids must be non-negative");
  if (find_child(parent, token)) {
    throw std::invalid_argument("tree: token " + std::to_string(token) + " already drafted under node " +
                                std::to_string(parent));
  }
  DraftNode child;
  child.id = static_cast<NodeId>(nodes_.size());
  child.parent = parent;
  child.token = token;
  child.edge_logprob = edge_logprob;
  child.cum_logprob = p.cum_logprob + edge_logprob;
  child.depth = p.depth + 1;
  nodes_[static_cast<std::size_t>(parent)].children.push_back(child.id);
  nodes_.push_back(std::move(child));
  draft_dists_.emplace_back();
  draw_orders_.emplace_back();
  return nodes_.back().id;
}

const DraftNode& DraftTree::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw std::out_of_range("tree: unknown node id " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

std::optional<NodeId> DraftTree::find_child(NodeId parent, TokenId token) const {
  for (NodeId c : node(parent).children) {
    if (nodes_[static_cast<std::size_t>(c)].token == token) return c;
  }
  return std::nullopt;
}

Prefix DraftTree::path_tokens(NodeId id) const {
  Prefix path;
  for (NodeId cur = id; cur != kRootNode; cur = node(cur).parent) path.push_back(node(cur).token);
  std::reverse(path.begin(), path.end());
  return path;
}

Prefix DraftTree::full_prefix(NodeId id) const {
  Prefix out = root_prefix_;
  const auto path = path_tokens(id);
  out.insert(out.end(), path.begin(), path.end());
  return out;
}

std::vector<Prefix> DraftTree::all_prefixes() const {
  std::vector<Prefix> out(nodes_.size());
  out[0] = root_prefix_;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    out[i] = out[static_cast<std::size_t>(nodes_[i].parent)];
    out[i].push_back(nodes_[i].token);
  }
  return out;
}

int DraftTree::max_depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

void DraftTree::bump_multiplicity(NodeId id) {
  node(id);
  ++nodes_[static_cast<std::size_t>(id)].multiplicity;
}

void DraftTree::set_proposal(NodeId id, Distribution draft_dist, std::vector<NodeId> draw_order) {
  node(id);
  for (NodeId c : draw_order) {
    if (node(c).parent != id) throw std::invalid_argument("tree: draw order names a non-child");
  }
  draft_dists_[static_cast<std::size_t>(id)] = std::move(draft_dist);
  draw_orders_[static_cast<std::size_t>(id)] = std::move(draw_order);
}

const Distribution* DraftTree::draft_distribution(NodeId id) const {
  node(id);
  const auto& d = draft_dists_[static_cast<std::size_t>(id)];
  return d ? &*d : nullptr;
}

std::span<const NodeId> DraftTree::draw_order(NodeId id) const {
  node(id);
  return draw_orders_[static_cast<std::size_t>(id)];
}

nlohmann::json DraftTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    nodes.push_back({{"id", n.id},
                     {"parent", n.parent},
                     {"token", n.token},
                     {"edge_logprob", n.edge_logprob},
                     {"cum_logprob", n.cum_logprob}});
  }
  return {{"root_prefix", root_prefix_}, {"nodes", std::move(nodes)}};
}

DraftTree DraftTree::from_json(const nlohmann::json& doc) {
  DraftTree tree(doc.at("root_prefix").get<Prefix>());
  for (const auto& n : doc.at("nodes")) {
    const NodeId id = tree.add_child(n.at("parent").get<NodeId>(), n.at("token").get<TokenId>(),
                                     n.at("edge_logprob").get<double>());
    if (id != n.at("id").get<NodeId>()) throw std::invalid_argument("tree json: ids must be dense and ordered");
  }
  return tree;
}

double cumulative_logprob(const DraftTree& tree, NodeId id) {
  tree.node(id);
  std::vector<double> edges;
  for (NodeId cur = id; cur != kRootNode; cur = tree.node(cur).parent) edges.push_back(tree.node(cur).edge_logprob);
  double sum = 0.0;
  for (auto it = edges.rbegin(); it != edges.rend(); ++it) sum += *it;
  return sum;
}

double tree_mass(const DraftTree& tree) {
  double mass = 0.0;
  for (std::size_t i = 1; i < tree.node_count(); ++i) mass += std::exp(tree.nodes()[i].cum_logprob);
  return mass;
}

void BuilderParams::validate() const {
  if (budget < 1) throw std::invalid_argument("builder: budget K must be >= 1");
  if (max_depth < 1) throw std::invalid_argument("builder: max depth D must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("builder: batch size B must be >= 1");
}

// ---------------------------------------------------------------------------
// Best-first (SSSP) builder

namespace {

struct SearchKey {
  double nll;
  int depth;
  Prefix path;

  bool operator<(const SearchKey& o) const {
    if (nll != o.nll) return nll < o.nll;
    if (depth != o.depth) return depth < o.depth;
    return path < o.path;
  }
};

struct Candidate {
  SearchKey key;
  std::size_t parent_work;  // index into the working node list
  TokenId token;
  double edge_logprob;

  bool operator<(const Candidate& o) const { return key < o.key; }
};

struct WorkNode {
  SearchKey key;
  std::size_t parent;  // working index, root = 0
  TokenId token;
  double edge_logprob;
};

Distribution draft_view(const Distribution& raw, const SamplingConfig& warp, bool warp_draft) {
  return warp_draft ? apply_warp(raw, warp) : raw;
}

Prefix concat(const Prefix& a, const Prefix& b) {
  Prefix out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Turns a set of working nodes (ancestors listed before descendants) into a
// DraftTree, keeping only the selected indices.
DraftTree assemble(const Prefix& prefix, const std::vector<WorkNode>& work, const std::vector<std::size_t>& keep) {
  DraftTree tree(prefix);
  std::vector<NodeId> remap(work.size(), kNoParent);
  remap[0] = kRootNode;
  for (std::size_t w : keep) {
    const auto& n = work[w];
    const NodeId parent = remap[n.parent];
    if (parent == kNoParent) throw std::logic_error("tree builder: selected node without its parent");
    remap[w] = tree.add_child(parent, n.token, n.edge_logprob);
  }
  return tree;
}

}  // namespace

DraftTree build_sssp(const Prefix& prefix, const LanguageModel& draft, const BuilderParams& params,
                     const SamplingConfig& warp, BuildStats* stats) {
  params.validate();
  const auto budget = static_cast<std::size_t>(params.budget);
  BuildStats local;

  std::vector<WorkNode> work;
  work.push_back({SearchKey{0.0, 0, {}}, 0, -1, 0.0});

  std::set<Candidate> frontier;      // H
  std::set<SearchKey> best_in_tree;  // K best keys extracted so far
  std::optional<SearchKey> threshold;  // T; empty means +inf

  auto expand = [&](const std::vector<std::size_t>& batch) {
    if (batch.empty()) return;
    std::vector<Prefix> prefixes;
    prefixes.reserve(batch.size());
    for (auto w : batch) prefixes.push_back(concat(prefix, work[w].key.path));
    const auto dists = draft.next_distributions(prefixes);
    ++local.rounds;
    local.prefixes_evaluated += prefixes.size();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& parent = work[batch[b]];
      const auto q = draft_view(dists[b], warp, params.warp_draft);
      for (std::size_t t = 0; t < q.size(); ++t) {
        if (q[t] <= 0.0) continue;
        const double edge = std::log(q[t]);
        Candidate c{SearchKey{parent.key.nll - edge, parent.key.depth + 1, parent.key.path}, batch[b],
                    static_cast<TokenId>(t), edge};
        c.key.path.push_back(static_cast<TokenId>(t));
        if (threshold && !(c.key < *threshold)) continue;
        frontier.insert(std::move(c));
      }
    }
    while (frontier.size() > budget) frontier.erase(std::prev(frontier.end()));
  };

  expand({0});
  while (true) {
    std::vector<std::size_t> batch;
    while (batch.size() < static_cast<std::size_t>(params.batch_size) && !frontier.empty()) {
      auto node = frontier.extract(frontier.begin());
      auto& c = node.value();
      if (threshold && !(c.key < *threshold)) {
        // everything left is at least as bad
        frontier.clear();
        break;
      }
      best_in_tree.insert(c.key);
      if (best_in_tree.size() > budget) best_in_tree.erase(std::prev(best_in_tree.end()));
      work.push_back({std::move(c.key), c.parent_work, c.token, c.edge_logprob});
      batch.push_back(work.size() - 1);
    }
    if (batch.empty()) break;
    if (best_in_tree.size() >= budget) threshold = *best_in_tree.rbegin();

    std::vector<std::size_t> to_expand;
    for (auto w : batch) {
      if (work[w].key.depth >= params.max_depth) continue;
      // children of the K-th node can never beat it
      if (threshold && !(work[w].key < *threshold)) continue;
      to_expand.push_back(w);
    }
    expand(to_expand);
  }

  std::vector<std::size_t> order(work.size() - 1);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i + 1;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return work[a].key < work[b].key; });
  if (order.size() > budget) order.resize(budget);

  if (stats) *stats = local;
  return assemble(prefix, work, order);
}

// ---------------------------------------------------------------------------
// Beam search

DraftTree build_beam(const Prefix& prefix, const LanguageModel& draft, int beam_size, int max_len,
                     const SamplingConfig& warp, bool warp_draft, BuildStats* stats) {
  if (beam_size < 1) throw std::invalid_argument("beam: beam_size must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam: max_len must be >= 1");
  BuildStats local;

  struct Hypothesis {
    SearchKey key;
    std::vector<double> edges;
    bool operator<(const Hypothesis& o) const { return key < o.key; }
  };
  std::vector<Hypothesis> beams{{SearchKey{0.0, 0, {}}, {}}};

  for (int step = 0; step < max_len; ++step) {
    std::vector<Prefix> prefixes;
    for (const auto& h : beams) prefixes.push_back(concat(prefix, h.key.path));
    const auto dists = draft.next_distributions(prefixes);
    ++local.rounds;
    local.prefixes_evaluated += prefixes.size();

    std::vector<Hypothesis> next;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const auto q = draft_view(dists[b], warp, warp_draft);
      for (std::size_t t = 0; t < q.size(); ++t) {
        if (q[t] <= 0.0) continue;
        const double edge = std::log(q[t]);
        Hypothesis h{SearchKey{beams[b].key.nll - edge, beams[b].key.depth + 1, beams[b].key.path}, beams[b].edges};
        h.key.path.push_back(static_cast<TokenId>(t));
        h.edges.push_back(edge);
        next.push_back(std::move(h));
      }
    }
    if (next.empty()) break;
    const auto keep = std::min(next.size(), static_cast<std::size_t>(beam_size));
    std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(keep), next.end());
    next.resize(keep);
    beams = std::move(next);
  }

  DraftTree tree(prefix);
  for (const auto& h : beams) {
    NodeId cur = kRootNode;
    for (std::size_t i = 0; i < h.key.path.size(); ++i) {
      if (auto c = tree.find_child(cur, h.key.path[i])) {
        cur = *c;
      } else {
        cur = tree.add_child(cur, h.key.path[i], h.edges[i]);
      }
    }
  }
  if (stats) *stats = local;
  return tree;
}

// ---------------------------------------------------------------------------
// Stochastic drafting

std::size_t schedule_capacity(std::span<const int> branching) {
  std::size_t total = 0;
  std::size_t width = 1;
  for (int b : branching) {
    width *= static_cast<std::size_t>(b);
    total += width;
  }
  return total;
}

DraftTree build_stochastic(const Prefix& prefix, const LanguageModel& draft, std::span<const int> branching,
                           Rng& rng, const SamplingConfig& warp, bool warp_draft, BuildStats* stats) {
  if (branching.empty()) throw std::invalid_argument("stochastic: branching schedule must be non-empty");
  for (int b : branching) {
    if (b < 1) throw std::invalid_argument("stochastic: branching factors must be positive");
  }
  BuildStats local;
  DraftTree tree(prefix);
  std::vector<NodeId> level{kRootNode};
  for (int width : branching) {
    std::vector<Prefix> prefixes;
    for (NodeId id : level) prefixes.push_back(tree.full_prefix(id));
    const auto dists = draft.next_distributions(prefixes);
    ++local.rounds;
    local.prefixes_evaluated += prefixes.size();

    std::vector<NodeId> next_level;
    for (std::size_t i = 0; i < level.size(); ++i) {
      const NodeId parent = level[i];
      auto q = draft_view(dists[i], warp, warp_draft);
      const auto draws = static_cast<std::size_t>(tree.node(parent).multiplicity) * static_cast<std::size_t>(width);
      std::vector<NodeId> order;
      order.reserve(draws);
      for (std::size_t s = 0; s < draws; ++s) {
        const TokenId tok = sample(q, rng);
        NodeId child;
        if (auto existing = tree.find_child(parent, tok)) {
          child = *existing;
          tree.bump_multiplicity(child);
        } else {
          child = tree.add_child(parent, tok, q.log_prob(tok));
          next_level.push_back(child);
        }
        order.push_back(child);
      }
      tree.set_proposal(parent, std::move(q), std::move(order));
    }
    level = std::move(next_level);
  }
  if (stats) *stats = local;
  return tree;
}

// ---------------------------------------------------------------------------

FlattenedTree flatten(const DraftTree& tree) {
  const std::size_t m = tree.node_count();
  FlattenedTree flat;
  flat.order.resize(m);
  // ids are already parent-first with siblings in insertion order
  for (std::size_t i = 0; i < m; ++i) flat.order[i] = static_cast<NodeId>(i);
  flat.mask.assign(m * m, 0);
  std::vector<std::size_t> position(m);
  for (std::size_t i = 0; i < m; ++i) position[static_cast<std::size_t>(flat.order[i])] = i;
  for (std::size_t row = 0; row < m; ++row) {
    const auto& n = tree.node(flat.order[row]);
    if (n.parent != kNoParent) {
      const auto prow = position[static_cast<std::size_t>(n.parent)];
      std::copy_n(flat.mask.begin() + static_cast<std::ptrdiff_t>(prow * m), m,
                  flat.mask.begin() + static_cast<std::ptrdiff_t>(row * m));
    }
    flat.mask[row * m + row] = 1;
  }
  return flat;
}

}  // namespace specexec
