#include "specexec/specinfer.hpp"

#include <algorithm>
#include <stdexcept>

namespace specexec {

Distribution residual(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("residual: size mismatch");
  std::vector<double> w(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    w[i] = std::max(0.0, p[i] - q[i]);
    sum += w[i];
  }
  if (!(sum > 0.0)) return p;
  return Distribution::from_weights(std::move(w));
}

VerifyOutcome verify_specinfer(const DraftTree& tree, std::span<const Distribution> target_dists,
                               const SamplingConfig& warp, Rng& rng) {
  if (target_dists.size() != tree.node_count()) {
    throw std::invalid_argument("verify_specinfer: need one target distribution per tree node");
  }
  VerifyOutcome out;
  NodeId node = kRootNode;
  while (true) {
    auto p = apply_warp(target_dists[static_cast<std::size_t>(node)], warp);
    const auto draws = tree.draw_order(node);
    if (draws.empty()) {
      if (!tree.node(node).children.empty()) {
        throw std::logic_error("verify_specinfer: node has children but no draft draws");
      }
      out.bonus = sample(p, rng);
      return out;
    }
    const Distribution* q = tree.draft_distribution(node);
    if (q == nullptr) throw std::logic_error("verify_specinfer: tree carries no draft probabilities");

    std::optional<NodeId> accepted;
    for (NodeId child : draws) {
      const TokenId tok = tree.node(child).token;
      const double qt = (*q)[static_cast<std::size_t>(tok)];
      const double ratio = qt > 0.0 ? p[static_cast<std::size_t>(tok)] / qt : 0.0;
      if (rng.uniform() < std::min(1.0, ratio)) {
        accepted = child;
        break;
      }
      p = residual(p, *q);
    }
    if (!accepted) {
      out.bonus = sample(p, rng);
      return out;
    }
    out.accepted_path.push_back(*accepted);
    node = *accepted;
  }
}

VerifyOutcome verify_specinfer(const DraftTree& tree, const LanguageModel& target, const SamplingConfig& warp,
                               Rng& rng) {
  const auto dists = target.next_distributions(tree.all_prefixes());
  return verify_specinfer(tree, dists, warp, rng);
}

Generation generate_specinfer(const Prefix& prompt, const LanguageModel& draft, const LanguageModel& target,
                              std::span<const int> branching, const SamplingConfig& cfg) {
  cfg.validate();
  if (draft.vocab_size() != target.vocab_size()) {
    throw std::invalid_argument("generate_specinfer: draft and target vocabularies differ");
  }
  Generation out;
  Rng draft_rng(cfg.seed, kSpecInferDraftStream);
  Rng accept_rng(cfg.seed, kSpecInferAcceptStream);
  Prefix context = prompt;
  const auto limit = static_cast<std::size_t>(cfg.max_new_tokens);

  while (out.tokens.size() < limit) {
    BuildStats bs;
    const auto tree = build_stochastic(context, draft, branching, draft_rng, cfg, true, &bs);
    const auto outcome = verify_specinfer(tree, target, cfg, accept_rng);
    ++out.stats.target_calls;
    out.stats.draft_calls += static_cast<std::uint64_t>(bs.rounds);

    std::vector<TokenId> emitted;
    for (NodeId id : outcome.accepted_path) emitted.push_back(tree.node(id).token);
    emitted.push_back(outcome.bonus);
    const auto take = std::min(emitted.size(), limit - out.tokens.size());
    out.tokens.insert(out.tokens.end(), emitted.begin(), emitted.begin() + static_cast<std::ptrdiff_t>(take));
    context.insert(context.end(), emitted.begin(), emitted.begin() + static_cast<std::ptrdiff_t>(take));
    out.stats.accepted_per_iteration.push_back(take);
  }
  out.stats.tokens_generated = out.tokens.size();
  return out;
}

std::vector<int> default_schedule(int budget, int depth) {
  if (budget < 1 || depth < 1) throw std::invalid_argument("default_schedule: budget and depth must be >= 1");
  const int d = std::min(budget, depth);
  std::vector<int> schedule(static_cast<std::size_t>(d), 1);
  schedule[0] = budget / d;
  return schedule;
}

}  // namespace specexec
