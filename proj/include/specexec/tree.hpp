#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "specexec/distribution.hpp"
#include "specexec/model.hpp"
#include "specexec/rng.hpp"
#include "specexec/sampling.hpp"

namespace specexec {

using NodeId = std::int32_t;
inline constexpr NodeId kRootNode = 0;
inline constexpr NodeId kNoParent = -1;

struct DraftNode {
  NodeId id = kRootNode;
  NodeId parent = kNoParent;
  TokenId token = -1;
  double edge_logprob = 0.0;  // log P_draft(token | parent path)
  double cum_logprob = 0.0;   // sum of edge_logprob from the root
  int depth = 0;
  std::vector<NodeId> children;  // insertion order
  std::uint32_t multiplicity = 1;
};

/// Rooted tree of candidate continuations of `root_prefix`. Node 0 is the
/// root and stands for the prefix itself; every other node is one drafted
/// token. Ids are assigned in insertion order, so parents precede children.
class DraftTree {
 public:
  explicit DraftTree(Prefix root_prefix);

  /// Throws std::invalid_argument for a bad log-probability, a negative
  /// token or a token already drafted under `parent`.
  NodeId add_child(NodeId parent, TokenId token, double edge_logprob);

  /// Throws std::out_of_range for an unknown id.
  const DraftNode& node(NodeId id) const;

  /// Drafted tokens, root excluded.
  std::size_t size() const { return nodes_.size() - 1; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<DraftNode>& nodes() const { return nodes_; }
  const Prefix& root_prefix() const { return root_prefix_; }

  std::optional<NodeId> find_child(NodeId parent, TokenId token) const;

  /// Drafted tokens from the root down to `id`.
  Prefix path_tokens(NodeId id) const;
  /// root_prefix followed by path_tokens(id).
  Prefix full_prefix(NodeId id) const;
  /// full_prefix for every node, indexed by id.
  std::vector<Prefix> all_prefixes() const;

  int max_depth() const;

  void bump_multiplicity(NodeId id);

  // Stochastic drafting records, per expanded node, the (warped) draft
  // distribution it sampled from and the sampled children in draw order.
  void set_proposal(NodeId id, Distribution draft_dist, std::vector<NodeId> draw_order);
  const Distribution* draft_distribution(NodeId id) const;
  std::span<const NodeId> draw_order(NodeId id) const;

  nlohmann::json to_json() const;
  static DraftTree from_json(const nlohmann::json& doc);

 private:
  Prefix root_prefix_;
  std::vector<DraftNode> nodes_;
  std::vector<std::optional<Distribution>> draft_dists_;
  std::vector<std::vector<NodeId>> draw_orders_;
};

/// Sum of edge log-probabilities along the root path of `id`.
double cumulative_logprob(const DraftTree& tree, NodeId id);

struct BuilderParams {
  int budget = 1;      // K: maximum drafted tokens
  int max_depth = 1;   // D
  int batch_size = 1;  // B: nodes expanded per draft call
  bool warp_draft = true;

  void validate() const;
};

struct BuildStats {
  int rounds = 0;                   // batched draft-model calls
  std::size_t prefixes_evaluated = 0;
};

/// Top-K continuations of `prefix` by cumulative draft probability, up to
/// depth D, via batched best-first search. Ties are broken by
/// (nll asc, depth asc, path lexicographic asc).
DraftTree build_sssp(const Prefix& prefix, const LanguageModel& draft, const BuilderParams& params,
                     const SamplingConfig& warp, BuildStats* stats = nullptr);

/// Standard beam search; the tree is the union of the prefixes of the
/// surviving hypotheses. Pruned hypotheses are dropped.
DraftTree build_beam(const Prefix& prefix, const LanguageModel& draft, int beam_size, int max_len,
                     const SamplingConfig& warp, bool warp_draft = true, BuildStats* stats = nullptr);

/// Samples branching[d] children per unit of multiplicity at depth d from the
/// warped draft distribution. Duplicate tokens are merged into one node and
/// its multiplicity counted, so a merged node draws proportionally more
/// children at the next depth.
DraftTree build_stochastic(const Prefix& prefix, const LanguageModel& draft, std::span<const int> branching,
                           Rng& rng, const SamplingConfig& warp, bool warp_draft = true,
                           BuildStats* stats = nullptr);

/// Upper bound on drafted tokens for a branching schedule.
std::size_t schedule_capacity(std::span<const int> branching);

/// Tree nodes in processing order with the merged attention mask: entry
/// (i, j) is set iff order[j] is order[i] or one of its ancestors. The root
/// row stands for the prompt.
struct FlattenedTree {
  std::vector<NodeId> order;
  std::vector<std::uint8_t> mask;  // row-major, m x m

  std::size_t dim() const { return order.size(); }
  bool attends(std::size_t row, std::size_t col) const { return mask[row * order.size() + col] != 0; }
};

FlattenedTree flatten(const DraftTree& tree);

/// Sum of exp(cum_logprob) over drafted nodes.
double tree_mass(const DraftTree& tree);

}  // namespace specexec
