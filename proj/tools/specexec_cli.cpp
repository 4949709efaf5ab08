// Command-line front end for the experiment harness.
//
//   specexec generate    --config cfg.json [--method sx|si|sequential] [--seed N] [--max-new-tokens L]
//   specexec coverage    --config cfg.json [--out curve.csv]
//   specexec acceptance  --config cfg.json [--out curve.csv]   (per-run stats go to <out>.jsonl)
//   specexec throughput  --config cfg.json [--curve curve.csv] [--preset name]
//   specexec equivalence [--config cfg.json] [--cells N] [--inject-fault OFFSET]
//
// Exit status is 0 iff every assertion of the invoked experiment passed;
// usage errors exit nonzero through CLI11.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "specexec/experiments.hpp"

namespace fs = std::filesystem;
using namespace specexec;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<unsigned> workers;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* opt = cmd->add_option("--config", args.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--out", args.out, "output file (stdout when omitted)");
  cmd->add_option("--workers", args.workers, "worker threads")->check(CLI::PositiveNumber);
}

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config.empty()) cfg = ExperimentConfig::load(args.config);
  if (args.workers) cfg.workers = *args.workers;
  if (!args.out.empty()) cfg.output = args.out;
  return cfg;
}

void emit(const fs::path& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

fs::path sibling_jsonl(const fs::path& path) {
  auto p = path;
  p.replace_extension(".jsonl");
  return p;
}

int report(const Assertions& a) {
  for (const auto& f : a.failures) std::cerr << "assertion failed: " << f << "\n";
  return a.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speculative decoding experiments on desk-scale models"};
  app.require_subcommand(1);

  CommonArgs gen_args;
  std::string method = "sx";
  std::optional<std::uint64_t> seed;
  std::optional<int> max_new_tokens;
  std::optional<int> budget;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<std::string> prompt_text;
  auto* gen = app.add_subcommand("generate", "decode one prompt and print text plus a stats footer");
  add_common(gen, gen_args, true);
  gen->add_option("--method", method, "sx, si or sequential")
      ->check(CLI::IsMember({"sx", "si", "sequential"}));
  gen->add_option("--seed", seed, "sampling seed");
  gen->add_option("--max-new-tokens", max_new_tokens, "tokens to generate")->check(CLI::NonNegativeNumber);
  gen->add_option("--budget", budget, "draft budget K")->check(CLI::PositiveNumber);
  gen->add_option("--temperature", temperature, "sampling temperature")->check(CLI::NonNegativeNumber);
  gen->add_option("--top-p", top_p, "nucleus mass")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--prompt", prompt_text, "prompt text (corpus-trained models only)");

  CommonArgs cov_args;
  auto* cov = app.add_subcommand("coverage", "top-k probability coverage of target vs draft ranking");
  add_common(cov, cov_args, true);

  CommonArgs acc_args;
  auto* acc = app.add_subcommand("acceptance", "generation rate against draft budget");
  add_common(acc, acc_args, true);

  CommonArgs thr_args;
  std::string curve_path;
  std::string preset;
  auto* thr = app.add_subcommand("throughput", "simulated tokens/s from a measured acceptance curve");
  add_common(thr, thr_args, false);
  thr->add_option("--curve", curve_path, "acceptance CSV")->check(CLI::ExistingFile);
  thr->add_option("--preset", preset, "cost model preset")->check(CLI::IsMember(cost_preset_names()));

  CommonArgs eq_args;
  std::optional<int> cells;
  std::optional<std::size_t> fault;
  auto* eq = app.add_subcommand("equivalence", "speculative vs sequential token equality grid");
  add_common(eq, eq_args, false);
  eq->add_option("--cells", cells, "cells in the default synthetic grid")->check(CLI::PositiveNumber);
  eq->add_option("--inject-fault", fault, "serve each cache node from the node OFFSET ids later");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto cfg = load_config(gen_args);
      if (seed) cfg.seeds = {*seed};
      if (max_new_tokens) cfg.max_new_tokens = *max_new_tokens;
      if (budget) cfg.budgets = {*budget};
      if (temperature) cfg.sampling.front().temperature = *temperature;
      if (top_p) cfg.sampling.front().top_p = *top_p;
      if (prompt_text) {
        cfg.prompts = PromptSource{};
        cfg.prompts.kind = PromptSource::Kind::inline_text;
        cfg.prompts.texts = {*prompt_text};
      }
      cfg.sampling.front().validate();
      const auto result = run_generate(cfg, method);
      const auto& s = result.generation.stats;
      std::string text = result.text + "\n";
      text += "-- method=" + method + " seed=" + std::to_string(cfg.seeds.front()) +
              " tokens=" + std::to_string(s.tokens_generated) + " target_calls=" + std::to_string(s.target_calls) +
              " draft_calls=" + std::to_string(s.draft_calls) + " gen_rate=" + format_double(s.generation_rate()) +
              "\n";
      emit(cfg.output, text);
      return 0;
    }
    if (cov->parsed()) {
      const auto cfg = load_config(cov_args);
      const auto rep = run_coverage(cfg);
      emit(cfg.output, rep.to_csv());
      Assertions a;
      a.check(rep.invariants_hold(), "coverage curves violate monotonicity or dominance");
      return report(a);
    }
    if (acc->parsed()) {
      const auto cfg = load_config(acc_args);
      const auto table = run_acceptance(cfg);
      emit(cfg.output, table.to_csv());
      if (!cfg.output.empty()) emit(sibling_jsonl(cfg.output), table.records_jsonl());
      return report(table.assertions);
    }
    if (thr->parsed()) {
      auto cfg = load_config(thr_args);
      if (!curve_path.empty()) cfg.curve_path = fs::path(curve_path);
      if (!preset.empty()) cfg.cost_model = cost_preset(preset);
      const auto table = run_throughput(cfg);
      emit(cfg.output, table.to_csv());
      return report(table.assertions);
    }
    if (eq->parsed()) {
      auto cfg = load_config(eq_args);
      if (cells) cfg.equivalence_cells = *cells;
      if (fault) cfg.inject_fault = *fault;
      const auto rep = run_equivalence(cfg);
      emit(cfg.output, rep.to_jsonl());
      Assertions a;
      for (const auto& c : rep.cells) {
        if (!c.pass) {
          a.check(false, "cell " + std::to_string(c.index) + " diverges at position " +
                             std::to_string(c.first_divergence.value_or(0)) + ": " + c.repro.dump());
        }
      }
      std::cerr << rep.cells.size() - a.failures.size() << "/" << rep.cells.size() << " cells match\n";
      return report(a);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
