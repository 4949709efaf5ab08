#include "specexec/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "specexec/specinfer.hpp"

namespace specexec {

namespace fs = std::filesystem;

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "coverage") return ExperimentKind::coverage;
  if (name == "acceptance") return ExperimentKind::acceptance;
  if (name == "throughput") return ExperimentKind::throughput;
  if (name == "equivalence") return ExperimentKind::equivalence;
  if (name == "generate") return ExperimentKind::generate;
  throw std::invalid_argument("unknown experiment kind '" + name + "'");
}

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::coverage: return "coverage";
    case ExperimentKind::acceptance: return "acceptance";
    case ExperimentKind::throughput: return "throughput";
    case ExperimentKind::equivalence: return "equivalence";
    case ExperimentKind::generate: return "generate";
  }
  return "unknown";
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path existing(const fs::path& base, const std::string& p) {
  auto path = resolve(base, p);
  if (!fs::exists(path)) throw std::invalid_argument("config: referenced file '" + path.string() + "' does not exist");
  return path;
}

Tokenization parse_tokenization(const nlohmann::json& spec) {
  const auto name = spec.value("tokenization", std::string("byte"));
  if (name == "byte") return Tokenization::byte;
  if (name == "whitespace") return Tokenization::whitespace;
  throw std::invalid_argument("config: unknown tokenization '" + name + "'");
}

std::string corpus_text(const nlohmann::json& spec, const fs::path& base) {
  if (spec.contains("text")) return spec.at("text").get<std::string>();
  return read_text_file(existing(base, spec.at("corpus").get<std::string>()));
}

void check_spec_files(const nlohmann::json& spec, const fs::path& base) {
  if (!spec.is_object()) return;
  const auto kind = spec.value("kind", std::string());
  if (kind == "ngram" && spec.contains("corpus")) existing(base, spec.at("corpus").get<std::string>());
  if (kind == "file") existing(base, spec.at("path").get<std::string>());
  if (kind == "perturbed") check_spec_files(spec.at("base"), base);
}

}  // namespace

std::unique_ptr<LanguageModel> load_model(const nlohmann::json& spec, const fs::path& base_dir,
                                          const std::optional<Vocabulary>& vocab) {
  const auto kind = spec.at("kind").get<std::string>();
  if (kind == "synthetic") {
    return std::make_unique<MarkovModel>(make_synthetic(spec.at("seed").get<std::uint64_t>(),
                                                        spec.at("vocab_size").get<std::size_t>(),
                                                        spec.at("sharpness").get<double>(), spec.value("order", 1)));
  }
  if (kind == "perturbed") {
    auto base = load_model(spec.at("base"), base_dir, vocab);
    const auto* markov = dynamic_cast<const MarkovModel*>(base.get());
    if (markov == nullptr) throw std::invalid_argument("config: perturbed models need a tabular/markov base");
    return std::make_unique<MarkovModel>(
        make_perturbed(*markov, spec.at("seed").get<std::uint64_t>(), spec.at("noise").get<double>()));
  }
  if (kind == "ngram") {
    return std::make_unique<NgramModel>(train_ngram(corpus_text(spec, base_dir), spec.value("order", 2),
                                                    spec.value("smoothing", 1.0), parse_tokenization(spec), vocab));
  }
  if (kind == "file") {
    const auto doc = nlohmann::json::parse(read_text_file(existing(base_dir, spec.at("path").get<std::string>())));
    return model_from_json(doc);
  }
  if (kind == "inline") return model_from_json(spec.at("model"));
  throw std::invalid_argument("config: unknown model kind '" + kind + "'");
}

ModelPair load_model_pair(const nlohmann::json& draft_spec, const nlohmann::json& target_spec,
                          const fs::path& base_dir) {
  ModelPair pair;
  std::vector<std::string> corpora;
  std::optional<Tokenization> tokenization;
  for (const auto* spec : {&draft_spec, &target_spec}) {
    if (spec->value("kind", std::string()) != "ngram") continue;
    const auto tok = parse_tokenization(*spec);
    if (tokenization && *tokenization != tok) {
      throw std::invalid_argument("config: draft and target corpus models use different tokenizations");
    }
    tokenization = tok;
    corpora.push_back(corpus_text(*spec, base_dir));
  }
  if (tokenization) pair.vocabulary = Vocabulary::build(*tokenization, corpora);
  pair.draft = load_model(draft_spec, base_dir, pair.vocabulary);
  pair.target = load_model(target_spec, base_dir, pair.vocabulary);
  if (!pair.vocabulary) {
    if (const auto* ng = dynamic_cast<const NgramModel*>(pair.target.get())) pair.vocabulary = ng->vocabulary();
  }
  if (pair.draft->vocab_size() != pair.target->vocab_size()) {
    throw std::invalid_argument("config: draft and target vocab sizes differ");
  }
  return pair;
}

std::vector<Prefix> resolve_prompts(const PromptSource& source, const LanguageModel& target,
                                    const std::optional<Vocabulary>& vocab) {
  std::vector<Prefix> out;
  switch (source.kind) {
    case PromptSource::Kind::tokens:
      out = source.sequences;
      break;
    case PromptSource::Kind::inline_text:
    case PromptSource::Kind::file: {
      if (!vocab) throw std::invalid_argument("prompts: text prompts need a corpus-trained model vocabulary");
      for (const auto& text : source.texts) {
        auto tokens = vocab->encode(text);
        if (source.kind == PromptSource::Kind::file && source.length > 0 &&
            tokens.size() > static_cast<std::size_t>(source.length)) {
          tokens.resize(static_cast<std::size_t>(source.length));
        }
        out.push_back(std::move(tokens));
      }
      break;
    }
    case PromptSource::Kind::sampled: {
      // unwarped samples from the target, one stream per prompt
      for (int i = 0; i < source.count; ++i) {
        Rng rng(source.seed + static_cast<std::uint64_t>(i), "prompt");
        Prefix p;
        for (int t = 0; t < source.length; ++t) p.push_back(sample(target.next_distribution(p), rng));
        out.push_back(std::move(p));
      }
      break;
    }
  }
  if (out.empty()) throw std::invalid_argument("prompts: source yields no prompts");
  return out;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  cfg.kind = parse_experiment_kind(doc.value("experiment", std::string("generate")));
  if (doc.contains("draft")) cfg.draft_spec = doc.at("draft");
  if (doc.contains("target")) cfg.target_spec = doc.at("target");
  check_spec_files(cfg.draft_spec, base_dir);
  check_spec_files(cfg.target_spec, base_dir);

  if (doc.contains("prompts")) {
    const auto& p = doc.at("prompts");
    const auto source = p.value("source", std::string("sampled"));
    if (source == "sampled") {
      cfg.prompts.kind = PromptSource::Kind::sampled;
      cfg.prompts.count = p.value("count", 4);
      cfg.prompts.length = p.value("length", 8);
      cfg.prompts.seed = p.value("seed", std::uint64_t{0});
    } else if (source == "inline") {
      cfg.prompts.kind = PromptSource::Kind::inline_text;
      cfg.prompts.texts = p.at("texts").get<std::vector<std::string>>();
    } else if (source == "tokens") {
      cfg.prompts.kind = PromptSource::Kind::tokens;
      cfg.prompts.sequences = p.at("sequences").get<std::vector<Prefix>>();
    } else if (source == "file") {
      cfg.prompts.kind = PromptSource::Kind::file;
      cfg.prompts.path = existing(base_dir, p.at("path").get<std::string>());
      cfg.prompts.length = p.value("length", 0);
      const int count = p.value("count", 0);
      std::istringstream lines(read_text_file(cfg.prompts.path));
      for (std::string line; std::getline(lines, line);) {
        if (line.empty()) continue;
        cfg.prompts.texts.push_back(line);
        if (count > 0 && static_cast<int>(cfg.prompts.texts.size()) >= count) break;
      }
    } else {
      throw std::invalid_argument("config: unknown prompt source '" + source + "'");
    }
  }

  cfg.budgets = doc.value("budgets", std::vector<int>{16});
  cfg.seeds = doc.value("seeds", std::vector<std::uint64_t>{1});
  if (doc.contains("sampling")) {
    cfg.sampling.clear();
    for (const auto& s : doc.at("sampling")) {
      SamplingConfig sc;
      sc.temperature = s.value("temperature", 1.0);
      sc.top_p = s.value("top_p", 1.0);
      cfg.sampling.push_back(sc);
    }
  }
  if (cfg.budgets.empty()) throw std::invalid_argument("config: budgets must be non-empty");
  if (cfg.seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
  for (int b : cfg.budgets) {
    if (b < 1) throw std::invalid_argument("config: budgets must be positive");
  }

  cfg.methods = doc.value("methods", cfg.methods);
  cfg.max_new_tokens = doc.value("max_new_tokens", cfg.max_new_tokens);
  cfg.max_depth = doc.value("max_depth", cfg.max_depth);
  cfg.batch_size = doc.value("batch_size", cfg.batch_size);
  cfg.si_depth = doc.value("si_depth", cfg.si_depth);
  if (doc.contains("si_schedules")) {
    for (const auto& [k, v] : doc.at("si_schedules").items()) cfg.si_schedules[std::stoi(k)] = v.get<std::vector<int>>();
  }
  for (auto& sc : cfg.sampling) {
    sc.max_new_tokens = cfg.max_new_tokens;
    sc.validate();
  }

  if (doc.contains("cost_model")) {
    const auto& cm = doc.at("cost_model");
    cfg.cost_model = cm.is_string() ? cost_preset(cm.get<std::string>()) : CostModel::from_json(cm);
  }
  if (doc.contains("curve")) cfg.curve_path = existing(base_dir, doc.at("curve").get<std::string>());
  cfg.curve_methods = doc.value("curve_methods", cfg.curve_methods);
  if (doc.contains("coverage")) {
    const auto& c = doc.at("coverage");
    cfg.coverage.positions_per_prompt = c.value("positions_per_prompt", cfg.coverage.positions_per_prompt);
    cfg.coverage.k_max = c.value("k_max", cfg.coverage.k_max);
    cfg.coverage.warped = c.value("mode", std::string("raw")) == "warped";
  }
  cfg.equivalence_cells = doc.value("cells", cfg.equivalence_cells);
  cfg.inject_fault = doc.value("inject_fault", std::size_t{0});
  cfg.workers = doc.value("workers", 1u);
  if (doc.contains("output")) cfg.output = resolve(base_dir, doc.at("output").get<std::string>());
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& file) {
  const auto doc = nlohmann::json::parse(read_text_file(file));
  return from_json(doc, file.has_parent_path() ? file.parent_path() : fs::path("."));
}

std::vector<int> ExperimentConfig::schedule_for(int budget) const {
  if (auto it = si_schedules.find(budget); it != si_schedules.end()) return it->second;
  return default_schedule(budget, si_depth);
}

}  // namespace specexec
