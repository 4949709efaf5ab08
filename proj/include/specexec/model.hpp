#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "specexec/distribution.hpp"

namespace specexec {

enum class BackendKind { tabular, markov, ngram };

std::string_view to_string(BackendKind kind);

/// A language model is a pure function from a prefix to the next-token
/// distribution. Implementations are immutable after construction and may be
/// shared across threads.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual BackendKind kind() const = 0;

  /// Throws std::domain_error if any token is outside [0, vocab_size).
  virtual Distribution next_distribution(std::span<const TokenId> prefix) const = 0;

  /// One batched call. Results are identical to calling next_distribution on
  /// each prefix in turn.
  virtual std::vector<Distribution> next_distributions(std::span<const Prefix> prefixes) const;

  virtual nlohmann::json to_json() const = 0;

 protected:
  void check_tokens(std::span<const TokenId> prefix) const;
};

/// Markov model of order k over a fixed table of rows. Order 0 is the
/// stationary tabular backend. Contexts shorter than k are left-padded with
/// token 0.
class MarkovModel final : public LanguageModel {
 public:
  MarkovModel(std::size_t vocab_size, int order, std::vector<Distribution> rows);

  static MarkovModel stationary(Distribution row);

  std::size_t vocab_size() const override { return vocab_size_; }
  BackendKind kind() const override { return order_ == 0 ? BackendKind::tabular : BackendKind::markov; }
  Distribution next_distribution(std::span<const TokenId> prefix) const override;
  nlohmann::json to_json() const override;

  int order() const { return order_; }
  std::size_t row_count() const { return rows_.size(); }
  const Distribution& row(std::size_t index) const { return rows_.at(index); }
  std::size_t row_index(std::span<const TokenId> prefix) const;

 private:
  std::size_t vocab_size_;
  int order_;
  std::vector<Distribution> rows_;
};

enum class Tokenization { byte, whitespace };

/// Sorted symbol inventory shared by a draft/target pair of corpus models.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(Tokenization tokenization, std::vector<std::string> symbols);

  /// Distinct symbols of all texts, sorted ascending.
  static Vocabulary build(Tokenization tokenization, std::span<const std::string> texts);

  std::vector<std::string> split(std::string_view text) const;
  /// Throws std::domain_error on a symbol not in the vocabulary.
  Prefix encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> tokens) const;

  std::size_t size() const { return symbols_.size(); }
  Tokenization tokenization() const { return tokenization_; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool operator==(const Vocabulary&) const = default;

 private:
  Tokenization tokenization_ = Tokenization::byte;
  std::vector<std::string> symbols_;
  std::map<std::string, TokenId, std::less<>> index_;
};

/// Add-lambda smoothed n-gram model. `order` is the context length. The
/// longest context suffix seen in training is used, so prefixes shorter than
/// the order and unseen contexts back off to shorter tables.
class NgramModel final : public LanguageModel {
 public:
  using CountTable = std::map<Prefix, std::vector<std::uint32_t>>;

  NgramModel(Vocabulary vocab, int order, double smoothing, std::vector<CountTable> tables);

  std::size_t vocab_size() const override { return vocab_.size(); }
  BackendKind kind() const override { return BackendKind::ngram; }
  Distribution next_distribution(std::span<const TokenId> prefix) const override;
  nlohmann::json to_json() const override;

  int order() const { return order_; }
  double smoothing() const { return smoothing_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const std::vector<CountTable>& tables() const { return tables_; }

 private:
  Vocabulary vocab_;
  int order_;
  double smoothing_;
  std::vector<CountTable> tables_;  // tables_[len] keyed by contexts of that length
};

/// Forwards to another model and counts batched calls and evaluated prefixes.
class CountingModel final : public LanguageModel {
 public:
  explicit CountingModel(const LanguageModel& inner) : inner_(inner) {}

  std::size_t vocab_size() const override { return inner_.vocab_size(); }
  BackendKind kind() const override { return inner_.kind(); }
  Distribution next_distribution(std::span<const TokenId> prefix) const override;
  std::vector<Distribution> next_distributions(std::span<const Prefix> prefixes) const override;
  nlohmann::json to_json() const override { return inner_.to_json(); }

  std::uint64_t calls() const { return calls_.load(); }
  std::uint64_t prefixes_evaluated() const { return prefixes_.load(); }
  void reset() {
    calls_ = 0;
    prefixes_ = 0;
  }

 private:
  const LanguageModel& inner_;
  mutable std::atomic<std::uint64_t> calls_{0};
  mutable std::atomic<std::uint64_t> prefixes_{0};
};

/// Throws std::invalid_argument on an empty corpus or order < 1. When `vocab`
/// is given the corpus must only use its symbols.
NgramModel train_ngram(std::string_view corpus, int order, double smoothing,
                       Tokenization tokenization = Tokenization::byte,
                       std::optional<Vocabulary> vocab = std::nullopt);

/// Markov model whose rows are drawn from a symmetric Dirichlet with the given
/// concentration; small sharpness gives peaked rows.
MarkovModel make_synthetic(std::uint64_t seed, std::size_t vocab_size, double sharpness, int order = 1);

/// Draft stand-in correlated with `base`: each row is base * exp(noise * z),
/// z standard normal, renormalized. Zero entries of the base stay zero.
MarkovModel make_perturbed(const MarkovModel& base, std::uint64_t seed, double noise);

std::unique_ptr<LanguageModel> model_from_json(const nlohmann::json& doc);

}  // namespace specexec
