#include "specexec/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace specexec {

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::tabular: return "tabular";
    case BackendKind::markov: return "markov";
    case BackendKind::ngram: return "ngram";
  }
  return "unknown";
}

void LanguageModel::check_tokens(std::span<const TokenId> prefix) const {
  const auto vocab = vocab_size();
  for (TokenId t : prefix) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw std::domain_error("model: token id " + std::to_string(t) + " outside vocabulary of size " +
                              std::to_string(vocab));
    }
  }
}

std::vector<Distribution> LanguageModel::next_distributions(std::span<const Prefix> prefixes) const {
  std::vector<Distribution> out;
  out.reserve(prefixes.size());
  for (const auto& p : prefixes) out.push_back(next_distribution(p));
  return out;
}

// ---------------------------------------------------------------------------
// MarkovModel

MarkovModel::MarkovModel(std::size_t vocab_size, int order, std::vector<Distribution> rows)
    : vocab_size_(vocab_size), order_(order), rows_(std::move(rows)) {
  if (vocab_size_ < 1) throw std::invalid_argument("markov: vocab_size must be >= 1");
  if (order_ < 0 || order_ > 8) throw std::invalid_argument("markov: order must be in [0, 8]");
  std::size_t expected = 1;
  for (int i = 0; i < order_; ++i) expected *= vocab_size_;
  if (rows_.size() != expected) {
    throw std::invalid_argument("markov: expected " + std::to_string(expected) + " rows, got " +
                                std::to_string(rows_.size()));
  }
  for (const auto& r : rows_) {
    if (r.size() != vocab_size_) throw std::invalid_argument("markov: row width != vocab_size");
  }
}

MarkovModel MarkovModel::stationary(Distribution row) {
  const auto v = row.size();
  return MarkovModel(v, 0, {std::move(row)});
}

std::size_t MarkovModel::row_index(std::span<const TokenId> prefix) const {
  std::size_t index = 0;
  const auto n = prefix.size();
  for (int i = 0; i < order_; ++i) {
    // position order_-1-i counted back from the end; missing positions pad with 0
    const std::size_t back = static_cast<std::size_t>(order_ - i);
    const TokenId t = back <= n ? prefix[n - back] : 0;
    index = index * vocab_size_ + static_cast<std::size_t>(t);
  }
  return index;
}

Distribution MarkovModel::next_distribution(std::span<const TokenId> prefix) const {
  check_tokens(prefix);
  return rows_[row_index(prefix)];
}

nlohmann::json MarkovModel::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rows_) rows.push_back(std::vector<double>(r.probs().begin(), r.probs().end()));
  return {{"backend", "markov"}, {"vocab_size", vocab_size_}, {"order", order_}, {"rows", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(Tokenization tokenization, std::vector<std::string> symbols)
    : tokenization_(tokenization), symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("vocabulary: duplicate symbol");
    }
  }
}

std::vector<std::string> Vocabulary::split(std::string_view text) const {
  std::vector<std::string> out;
  if (tokenization_ == Tokenization::byte) {
    out.reserve(text.size());
    for (char c : text) out.emplace_back(1, c);
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Vocabulary Vocabulary::build(Tokenization tokenization, std::span<const std::string> texts) {
  Vocabulary splitter(tokenization, {});
  std::set<std::string> symbols;
  for (const auto& t : texts) {
    for (auto& s : splitter.split(t)) symbols.insert(std::move(s));
  }
  return Vocabulary(tokenization, std::vector<std::string>(symbols.begin(), symbols.end()));
}

Prefix Vocabulary::encode(std::string_view text) const {
  Prefix out;
  for (const auto& s : split(text)) {
    auto it = index_.find(s);
    if (it == index_.end()) throw std::domain_error("vocabulary: unknown symbol '" + s + "'");
    out.push_back(it->second);
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokenization_ == Tokenization::whitespace && i > 0) out += ' ';
    out += symbols_.at(static_cast<std::size_t>(tokens[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// NgramModel

NgramModel::NgramModel(Vocabulary vocab, int order, double smoothing, std::vector<CountTable> tables)
    : vocab_(std::move(vocab)), order_(order), smoothing_(smoothing), tables_(std::move(tables)) {
  if (order_ < 1) throw std::invalid_argument("ngram: order must be >= 1");
  if (!(smoothing_ > 0.0)) throw std::invalid_argument("ngram: smoothing must be > 0");
  if (vocab_.size() < 1) throw std::invalid_argument("ngram: empty vocabulary");
  if (tables_.size() != static_cast<std::size_t>(order_) + 1) {
    throw std::invalid_argument("ngram: expected order+1 count tables");
  }
}

Distribution NgramModel::next_distribution(std::span<const TokenId> prefix) const {
  check_tokens(prefix);
  const auto v = vocab_.size();
  std::vector<double> probs(v);
  // back off to the longest context suffix seen in training
  for (std::size_t len = std::min(prefix.size(), static_cast<std::size_t>(order_)) + 1; len-- > 0;) {
    const Prefix context(prefix.end() - static_cast<std::ptrdiff_t>(len), prefix.end());
    auto it = tables_[len].find(context);
    if (it == tables_[len].end()) continue;
    double total = 0.0;
    for (auto c : it->second) total += c;
    const double denom = total + smoothing_ * static_cast<double>(v);
    for (std::size_t i = 0; i < v; ++i) probs[i] = (it->second[i] + smoothing_) / denom;
    return Distribution(std::move(probs));
  }
  for (auto& p : probs) p = 1.0 / static_cast<double>(v);
  return Distribution(std::move(probs));
}

nlohmann::json NgramModel::to_json() const {
  nlohmann::json symbols = nlohmann::json::array();
  for (const auto& s : vocab_.symbols()) {
    // bytes, so non-UTF-8 symbols survive the round trip
    std::vector<int> bytes;
    for (unsigned char c : s) bytes.push_back(c);
    symbols.push_back(bytes);
  }
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& table : tables_) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [ctx, counts] : table) entries.push_back({{"context", ctx}, {"counts", counts}});
    tables.push_back(std::move(entries));
  }
  return {{"backend", "ngram"},
          {"vocab_size", vocab_.size()},
          {"order", order_},
          {"smoothing", smoothing_},
          {"tokenization", vocab_.tokenization() == Tokenization::byte ? "byte" : "whitespace"},
          {"symbols", std::move(symbols)},
          {"tables", std::move(tables)}};
}

// ---------------------------------------------------------------------------
// CountingModel

Distribution CountingModel::next_distribution(std::span<const TokenId> prefix) const {
  ++calls_;
  ++prefixes_;
  return inner_.next_distribution(prefix);
}

std::vector<Distribution> CountingModel::next_distributions(std::span<const Prefix> prefixes) const {
  ++calls_;
  prefixes_ += prefixes.size();
  return inner_.next_distributions(prefixes);
}

// ---------------------------------------------------------------------------
// Factories

NgramModel train_ngram(std::string_view corpus, int order, double smoothing, Tokenization tokenization,
                       std::optional<Vocabulary> vocab) {
  if (order < 1) throw std::invalid_argument("train_ngram: order must be >= 1");
  if (!vocab) {
    const std::string text(corpus);
    vocab = Vocabulary::build(tokenization, std::span<const std::string>(&text, 1));
  }
  if (vocab->tokenization() != tokenization) {
    throw std::invalid_argument("train_ngram: vocabulary tokenization mismatch");
  }
  const Prefix tokens = vocab->encode(corpus);
  if (tokens.empty()) throw std::invalid_argument("train_ngram: corpus is empty after tokenization");

  const auto v = vocab->size();
  std::vector<NgramModel::CountTable> tables(static_cast<std::size_t>(order) + 1);
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    const auto next = static_cast<std::size_t>(tokens[pos]);
    for (std::size_t len = 0; len <= static_cast<std::size_t>(order) && len <= pos; ++len) {
      Prefix ctx(tokens.begin() + static_cast<std::ptrdiff_t>(pos - len),
                 tokens.begin() + static_cast<std::ptrdiff_t>(pos));
      auto [it, inserted] = tables[len].try_emplace(std::move(ctx));
      if (inserted) it->second.assign(v, 0);
      ++it->second[next];
    }
  }
  return NgramModel(std::move(*vocab), order, smoothing, std::move(tables));
}

MarkovModel make_synthetic(std::uint64_t seed, std::size_t vocab_size, double sharpness, int order) {
  if (vocab_size < 2) throw std::invalid_argument("make_synthetic: vocab_size must be >= 2");
  if (!(sharpness > 0.0)) throw std::invalid_argument("make_synthetic: sharpness must be > 0");
  std::size_t n_rows = 1;
  for (int i = 0; i < order; ++i) n_rows *= vocab_size;

  std::mt19937_64 gen(seed);
  // Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space so tiny
  // concentrations do not underflow to an all-zero row.
  std::gamma_distribution<double> gamma(sharpness + 1.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Distribution> rows;
  rows.reserve(n_rows);
  std::vector<double> logw(vocab_size);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (auto& lw : logw) {
      double u = unif(gen);
      while (u <= 0.0) u = unif(gen);
      lw = std::log(gamma(gen)) + std::log(u) / sharpness;
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    std::vector<double> w(vocab_size);
    for (std::size_t i = 0; i < vocab_size; ++i) w[i] = std::exp(logw[i] - mx);
    rows.push_back(Distribution::from_weights(std::move(w)));
  }
  return MarkovModel(vocab_size, order, std::move(rows));
}

MarkovModel make_perturbed(const MarkovModel& base, std::uint64_t seed, double noise) {
  if (!(noise >= 0.0)) throw std::invalid_argument("make_perturbed: noise must be >= 0");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto v = base.vocab_size();
  std::vector<Distribution> rows;
  rows.reserve(base.row_count());
  std::vector<double> logw(v);
  for (std::size_t r = 0; r < base.row_count(); ++r) {
    const auto& row = base.row(r);
    double mx = -INFINITY;
    for (std::size_t i = 0; i < v; ++i) {
      const double z = normal(gen);
      logw[i] = row[i] > 0.0 ? std::log(row[i]) + noise * z : -INFINITY;
      mx = std::max(mx, logw[i]);
    }
    std::vector<double> w(v);
    for (std::size_t i = 0; i < v; ++i) w[i] = std::isfinite(logw[i]) ? std::exp(logw[i] - mx) : 0.0;
    rows.push_back(Distribution::from_weights(std::move(w)));
  }
  return MarkovModel(v, base.order(), std::move(rows));
}

std::unique_ptr<LanguageModel> model_from_json(const nlohmann::json& doc) {
  const auto backend = doc.at("backend").get<std::string>();
  if (backend == "markov") {
    const auto v = doc.at("vocab_size").get<std::size_t>();
    std::vector<Distribution> rows;
    for (const auto& r : doc.at("rows")) rows.emplace_back(r.get<std::vector<double>>());
    return std::make_unique<MarkovModel>(v, doc.at("order").get<int>(), std::move(rows));
  }
  if (backend == "ngram") {
    const auto tok_name = doc.at("tokenization").get<std::string>();
    Tokenization tok;
    if (tok_name == "byte") {
      tok = Tokenization::byte;
    } else if (tok_name == "whitespace") {
      tok = Tokenization::whitespace;
    } else {
      throw std::invalid_argument("model json: unknown tokenization '" + tok_name + "'");
    }
    std::vector<std::string> symbols;
    for (const auto& s : doc.at("symbols")) {
      std::string sym;
      for (int b : s.get<std::vector<int>>()) sym.push_back(static_cast<char>(b));
      symbols.push_back(std::move(sym));
    }
    Vocabulary vocab(tok, std::move(symbols));
    if (vocab.size() != doc.at("vocab_size").get<std::size_t>()) {
      throw std::invalid_argument("model json: vocab_size does not match symbols");
    }
    std::vector<NgramModel::CountTable> tables;
    for (const auto& entries : doc.at("tables")) {
      NgramModel::CountTable table;
      for (const auto& e : entries) {
        auto counts = e.at("counts").get<std::vector<std::uint32_t>>();
        if (counts.size() != vocab.size()) throw std::invalid_argument("model json: count row width");
        table.emplace(e.at("context").get<Prefix>(), std::move(counts));
      }
      tables.push_back(std::move(table));
    }
    return std::make_unique<NgramModel>(std::move(vocab), doc.at("order").get<int>(),
                                        doc.at("smoothing").get<double>(), std::move(tables));
  }
  throw std::invalid_argument("model json: unknown backend '" + backend + "'");
}

}  // namespace specexec
