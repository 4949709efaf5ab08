#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "specexec/costsim.hpp"
#include "specexec/model.hpp"
#include "specexec/sampling.hpp"

namespace specexec {

enum class ExperimentKind { coverage, acceptance, throughput, equivalence, generate };

ExperimentKind parse_experiment_kind(const std::string& name);
std::string_view to_string(ExperimentKind kind);

/// Where evaluation prompts come from.
struct PromptSource {
  enum class Kind { sampled, inline_text, tokens, file };
  Kind kind = Kind::sampled;
  std::vector<std::string> texts;      // inline_text, or lines read from file
  std::vector<Prefix> sequences;       // tokens
  std::filesystem::path path;          // file
  int count = 4;                       // sampled: number of prompts
  int length = 8;                      // sampled: tokens per prompt; file: max symbols per prompt
  std::uint64_t seed = 0;              // sampled
};

struct CoverageSettings {
  int positions_per_prompt = 64;
  int k_max = 0;      // 0 means vocab size
  bool warped = false;  // raw probabilities unless set
};

/// A loaded experiment description. Relative paths resolve against the
/// config file's directory; every referenced file must exist at load time.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::generate;
  nlohmann::json draft_spec;
  nlohmann::json target_spec;
  PromptSource prompts;
  std::vector<int> budgets{16};
  std::vector<SamplingConfig> sampling{SamplingConfig{0.6, 0.9, 0, 32}};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> methods{"sx", "si"};
  int max_new_tokens = 32;
  int max_depth = 32;
  int batch_size = 16;
  int si_depth = 8;
  std::map<int, std::vector<int>> si_schedules;  // explicit overrides by budget
  std::optional<CostModel> cost_model;
  std::optional<std::filesystem::path> curve_path;
  std::vector<std::string> curve_methods{"sx", "si"};
  CoverageSettings coverage;
  int equivalence_cells = 100;  // used when no models are given
  std::size_t inject_fault = 0;
  unsigned workers = 1;
  std::filesystem::path output;
  std::filesystem::path base_dir{"."};

  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
  static ExperimentConfig load(const std::filesystem::path& file);

  /// Branching schedule used by the SpecInfer baseline at a given budget.
  std::vector<int> schedule_for(int budget) const;
};

/// Draft and target built from specs, sharing one vocabulary when both come
/// from corpora.
struct ModelPair {
  std::unique_ptr<LanguageModel> draft;
  std::unique_ptr<LanguageModel> target;
  std::optional<Vocabulary> vocabulary;
};

/// Spec kinds: synthetic {seed, vocab_size, sharpness, order}, perturbed
/// {base, seed, noise}, ngram {corpus | text, order, smoothing, tokenization},
/// file {path}.
ModelPair load_model_pair(const nlohmann::json& draft_spec, const nlohmann::json& target_spec,
                          const std::filesystem::path& base_dir = ".");

std::unique_ptr<LanguageModel> load_model(const nlohmann::json& spec, const std::filesystem::path& base_dir = ".",
                                          const std::optional<Vocabulary>& vocab = std::nullopt);

/// Resolves the configured prompt source into token sequences.
std::vector<Prefix> resolve_prompts(const PromptSource& source, const LanguageModel& target,
                                    const std::optional<Vocabulary>& vocab);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace specexec
