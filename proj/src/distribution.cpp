#include "specexec/distribution.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace specexec {

namespace {
constexpr double kSumTolerance = 1e-9;
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("distribution: empty vector");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("distribution: negative or non-finite entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw std::invalid_argument("distribution: entries sum to " + std::to_string(sum));
  }
}

Distribution Distribution::from_weights(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("distribution: negative or non-finite weight");
    }
    sum += w;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("distribution: weights sum to zero");
  for (double& w : weights) w /= sum;
  return Distribution(std::move(weights));
}

Distribution Distribution::one_hot(std::size_t vocab_size, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab_size) {
    throw std::domain_error("distribution: token out of range");
  }
  std::vector<double> probs(vocab_size, 0.0);
  probs[static_cast<std::size_t>(token)] = 1.0;
  return Distribution(std::move(probs));
}

Distribution Distribution::uniform(std::size_t vocab_size) {
  return from_weights(std::vector<double>(vocab_size, 1.0));
}

double Distribution::log_prob(TokenId token) const {
  const double p = probs_.at(static_cast<std::size_t>(token));
  return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
}

std::vector<double> Distribution::log_probs() const {
  std::vector<double> out(probs_.size());
  for (std::size_t i = 0; i < probs_.size(); ++i) out[i] = log_prob(static_cast<TokenId>(i));
  return out;
}

TokenId Distribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs_.size(); ++i) {
    if (probs_[i] > probs_[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("total_variation: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return 0.5 * acc;
}

}  // namespace specexec
