#pragma once

#include <span>
#include <vector>

#include "specexec/engine.hpp"
#include "specexec/model.hpp"
#include "specexec/rng.hpp"
#include "specexec/sampling.hpp"
#include "specexec/tree.hpp"

namespace specexec {

inline constexpr const char* kSpecInferDraftStream = "specinfer-draft";
inline constexpr const char* kSpecInferAcceptStream = "specinfer-accept";

struct VerifyOutcome {
  std::vector<NodeId> accepted_path;  // root-descending chain, root excluded
  TokenId bonus = -1;
  std::size_t tokens_emitted() const { return accepted_path.size() + 1; }
};

/// normalize(max(0, p - q)). Falls back to p when the clamped mass is zero,
/// which only happens when p == q and rejection was impossible.
Distribution residual(const Distribution& p, const Distribution& q);

/// Multi-round rejection sampling down a stochastically drafted tree.
/// `target_dists` holds the raw target distribution for every tree node
/// (indexed by node id, root first). Children are tried in draw order, so a
/// token drawn twice is tried twice against the updated residual.
/// Throws std::logic_error if an expanded node lacks its draft distribution.
VerifyOutcome verify_specinfer(const DraftTree& tree, std::span<const Distribution> target_dists,
                               const SamplingConfig& warp, Rng& rng);

/// Same, evaluating the target on the flattened tree in one batched call.
VerifyOutcome verify_specinfer(const DraftTree& tree, const LanguageModel& target, const SamplingConfig& warp,
                               Rng& rng);

Generation generate_specinfer(const Prefix& prompt, const LanguageModel& draft, const LanguageModel& target,
                              std::span<const int> branching, const SamplingConfig& cfg);

/// Depth-capped schedule [budget / depth, 1, 1, ...] whose capacity is at
/// most `budget`: several stems sharing a fixed speculation depth.
std::vector<int> default_schedule(int budget, int depth);

}  // namespace specexec
