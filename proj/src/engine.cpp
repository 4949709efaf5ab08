#include "specexec/engine.hpp"

#include <numeric>
#include <optional>
#include <stdexcept>

namespace specexec {

double GenStats::generation_rate() const {
  return target_calls == 0 ? 0.0 : static_cast<double>(tokens_generated) / static_cast<double>(target_calls);
}

double GenStats::mean_draft_rounds() const {
  return target_calls == 0 ? 0.0 : static_cast<double>(draft_calls) / static_cast<double>(target_calls);
}

ProbCache::ProbCache(DraftTree tree, std::vector<Distribution> node_dists)
    : tree_(std::move(tree)), dists_(std::move(node_dists)) {
  if (dists_.size() != tree_.node_count()) {
    throw std::invalid_argument("cache: need one distribution per tree node plus the root");
  }
}

const Distribution& ProbCache::at(NodeId id) const {
  tree_.node(id);
  return dists_[static_cast<std::size_t>(id)];
}

bool ProbCache::advance(TokenId token) {
  if (auto child = tree_.find_child(cursor_, token)) {
    cursor_ = *child;
    return true;
  }
  return false;
}

const Distribution* ProbCache::lookup(std::span<const TokenId> extension) const {
  NodeId cur = kRootNode;
  for (TokenId t : extension) {
    auto child = tree_.find_child(cur, t);
    if (!child) return nullptr;
    cur = *child;
  }
  return &dists_[static_cast<std::size_t>(cur)];
}

void ProbCache::inject_offset_fault(std::size_t offset) {
  if (offset == 0 || dists_.size() < 2) return;
  std::vector<Distribution> shifted(dists_.size());
  for (std::size_t i = 0; i < dists_.size(); ++i) shifted[i] = dists_[(i + offset) % dists_.size()];
  dists_ = std::move(shifted);
}

ProbCache precompute(const Prefix& prefix, const LanguageModel& draft, const LanguageModel& target,
                     const BuilderParams& params, const SamplingConfig& warp, BuildStats* build_stats) {
  if (draft.vocab_size() != target.vocab_size()) {
    throw std::invalid_argument("precompute: draft and target vocabularies differ");
  }
  auto tree = build_sssp(prefix, draft, params, warp, build_stats);
  const auto prefixes = tree.all_prefixes();
  auto dists = target.next_distributions(prefixes);
  return ProbCache(std::move(tree), std::move(dists));
}

Generation generate_specexec(const Prefix& prompt, const LanguageModel& draft, const LanguageModel& target,
                             const BuilderParams& params, const SamplingConfig& cfg,
                             const SpecExecOptions& options) {
  cfg.validate();
  params.validate();
  Generation out;
  Rng rng(cfg.seed, kGenerationStream);
  Prefix context = prompt;

  std::optional<ProbCache> cache;
  bool miss = true;  // the prompt itself is not cached yet
  std::uint64_t this_iteration = 0;

  for (int t = 0; t < cfg.max_new_tokens; ++t) {
    if (miss) {
      if (cache) out.stats.accepted_per_iteration.push_back(this_iteration);
      BuildStats bs;
      cache.emplace(precompute(context, draft, target, params, cfg, &bs));
      cache->inject_offset_fault(options.cache_fault_offset);
      ++out.stats.target_calls;
      out.stats.draft_calls += static_cast<std::uint64_t>(bs.rounds);
      this_iteration = 0;
      miss = false;
    }
    const auto p = apply_warp(cache->current(), cfg);
    const TokenId next = sample(p, rng);
    context.push_back(next);
    out.tokens.push_back(next);
    ++this_iteration;
    miss = !cache->advance(next);
  }
  if (cache) out.stats.accepted_per_iteration.push_back(this_iteration);
  out.stats.tokens_generated = out.tokens.size();
  return out;
}

Generation generate_sequential(const Prefix& prompt, const LanguageModel& target, const SamplingConfig& cfg) {
  cfg.validate();
  Generation out;
  Rng rng(cfg.seed, kGenerationStream);
  Prefix context = prompt;
  for (int t = 0; t < cfg.max_new_tokens; ++t) {
    const auto p = apply_warp(target.next_distribution(context), cfg);
    const TokenId next = sample(p, rng);
    context.push_back(next);
    out.tokens.push_back(next);
    ++out.stats.target_calls;
    out.stats.accepted_per_iteration.push_back(1);
  }
  out.stats.tokens_generated = out.tokens.size();
  return out;
}

nlohmann::json stats_record(const std::string& method, const GenStats& stats, const SamplingConfig& cfg,
                            const nlohmann::json& extra) {
  nlohmann::json rec = {{"method", method},
                        {"t", cfg.temperature},
                        {"top_p", cfg.top_p},
                        {"seed", cfg.seed},
                        {"tokens", stats.tokens_generated},
                        {"target_calls", stats.target_calls},
                        {"draft_calls", stats.draft_calls},
                        {"generation_rate", stats.generation_rate()}};
  for (auto it = extra.begin(); it != extra.end(); ++it) rec[it.key()] = it.value();
  return rec;
}

}  // namespace specexec
