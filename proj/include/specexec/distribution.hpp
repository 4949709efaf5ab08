#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace specexec {

using TokenId = std::int32_t;

/// Token sequence fed to a model. The model sees the whole sequence; there is
/// no implicit BOS token.
using Prefix = std::vector<TokenId>;

/// Probability vector over a vocabulary for one position.
///
/// Entries are non-negative and sum to one within 1e-9. Construction through
/// `from_weights` normalizes once; the plain constructor only validates.
class Distribution {
 public:
  Distribution() = default;
  explicit Distribution(std::vector<double> probs);

  static Distribution from_weights(std::vector<double> weights);
  static Distribution one_hot(std::size_t vocab_size, TokenId token);
  static Distribution uniform(std::size_t vocab_size);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  /// log p(token); -inf for zero-probability tokens.
  double log_prob(TokenId token) const;
  std::vector<double> log_probs() const;

  /// Lowest-id token among the maximal entries.
  TokenId argmax() const;

  bool operator==(const Distribution& other) const = default;

 private:
  std::vector<double> probs_;
};

double total_variation(std::span<const double> a, std::span<const double> b);

}  // namespace specexec
