#include "specexec/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace specexec {

namespace {
// Slack when comparing a cumulative sum against top_p.
constexpr double kNucleusSlack = 1e-12;
}  // namespace

void SamplingConfig::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("sampling: temperature must be finite and >= 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw std::invalid_argument("sampling: top_p must be in (0, 1]");
  }
  if (max_new_tokens < 0) throw std::invalid_argument("sampling: max_new_tokens must be >= 0");
}

Distribution apply_warp(const Distribution& dist, const SamplingConfig& cfg) {
  if (cfg.temperature == 0.0) return Distribution::one_hot(dist.size(), dist.argmax());
  if (cfg.is_identity()) return dist;

  const std::size_t n = dist.size();
  std::vector<double> w(dist.probs().begin(), dist.probs().end());

  if (cfg.temperature != 1.0) {
    double max_logit = -INFINITY;
    for (double p : w) {
      if (p > 0.0) max_logit = std::max(max_logit, std::log(p) / cfg.temperature);
    }
    for (double& p : w) {
      p = p > 0.0 ? std::exp(std::log(p) / cfg.temperature - max_logit) : 0.0;
    }
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& p : w) p /= sum;
  }

  if (cfg.top_p < 1.0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < n) {
      cum += w[order[keep]];
      ++keep;
      if (cum >= cfg.top_p - kNucleusSlack) break;
    }
    for (std::size_t i = keep; i < n; ++i) w[order[i]] = 0.0;
  }
  return Distribution::from_weights(std::move(w));
}

TokenId sample(const Distribution& dist, double u) {
  const auto probs = dist.probs();
  double cum = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last_nonzero = i;
    if (u < cum) return static_cast<TokenId>(i);
  }
  // u landed in the rounding gap above the final cumulative sum
  return static_cast<TokenId>(last_nonzero);
}

TokenId sample(const Distribution& dist, Rng& rng) { return sample(dist, rng.uniform()); }

}  // namespace specexec
