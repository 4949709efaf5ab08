#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "specexec/model.hpp"
#include "specexec/sampling.hpp"
#include "specexec/tree.hpp"

namespace specexec {

/// Name of the rng stream every generator samples output tokens from.
inline constexpr const char* kGenerationStream = "generation";

struct GenStats {
  std::uint64_t target_calls = 0;
  std::uint64_t draft_calls = 0;
  std::uint64_t tokens_generated = 0;
  std::vector<std::uint64_t> accepted_per_iteration;

  /// tokens_generated / target_calls; 0 when nothing ran.
  double generation_rate() const;
  /// Mean batched draft calls per target iteration.
  double mean_draft_rounds() const;
};

struct Generation {
  Prefix tokens;  // new tokens only
  GenStats stats;
};

/// Raw target distributions for every prefix of a draft tree. The cursor
/// follows sampled tokens down the tree; stepping off the tree is a miss.
class ProbCache {
 public:
  ProbCache(DraftTree tree, std::vector<Distribution> node_dists);

  const DraftTree& tree() const { return tree_; }
  const Prefix& anchor() const { return tree_.root_prefix(); }
  NodeId cursor() const { return cursor_; }

  /// Target next-token distribution for the prefix at the cursor.
  const Distribution& current() const { return dists_[static_cast<std::size_t>(cursor_)]; }
  const Distribution& at(NodeId id) const;

  /// Moves the cursor to the child carrying `token`; false on a miss, in
  /// which case the cursor does not move.
  bool advance(TokenId token);

  /// Looks up an arbitrary extension of the anchor; nullptr if absent.
  const Distribution* lookup(std::span<const TokenId> extension) const;

  /// Test hook: node i serves node (i + offset) mod n's distribution.
  void inject_offset_fault(std::size_t offset);

 private:
  DraftTree tree_;
  std::vector<Distribution> dists_;
  NodeId cursor_ = kRootNode;
};

/// Builds the draft tree with build_sssp and evaluates the target on every
/// tree prefix (root included) in one batched call.
ProbCache precompute(const Prefix& prefix, const LanguageModel& draft, const LanguageModel& target,
                     const BuilderParams& params, const SamplingConfig& warp, BuildStats* build_stats = nullptr);

struct SpecExecOptions {
  std::size_t cache_fault_offset = 0;  // 0 disables fault injection
};

/// Sequential sampling served from a speculative cache: identical tokens to
/// generate_sequential for the same seed.
Generation generate_specexec(const Prefix& prompt, const LanguageModel& draft, const LanguageModel& target,
                             const BuilderParams& params, const SamplingConfig& cfg,
                             const SpecExecOptions& options = {});

/// One target call per token.
Generation generate_sequential(const Prefix& prompt, const LanguageModel& target, const SamplingConfig& cfg);

/// JSON-lines stats record.
nlohmann::json stats_record(const std::string& method, const GenStats& stats, const SamplingConfig& cfg,
                            const nlohmann::json& extra = nlohmann::json::object());

}  // namespace specexec
