#include "specexec/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "specexec/specinfer.hpp"
#include "specexec/stats.hpp"

namespace specexec {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace {

std::string schema_line(std::string_view kind) {
  return "# schema_version=" + std::to_string(kCsvSchemaVersion) + " kind=" + std::string(kind) + "\n";
}

std::string join_schedule(const std::vector<int>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "-" : "") + std::to_string(s[i]);
  return out;
}

std::vector<int> split_schedule(const std::string& s) {
  std::vector<int> out;
  std::istringstream in(s);
  for (std::string part; std::getline(in, part, '-');) {
    if (!part.empty()) out.push_back(std::stoi(part));
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) out.push_back(cell);
  return out;
}

std::vector<std::size_t> rank_desc(std::span<const double> probs) {
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  return order;
}

}  // namespace

// ---------------------------------------------------------------------------
// Coverage

bool CoverageReport::invariants_hold(double tol) const {
  if (target_curve.size() != draft_curve.size()) return false;
  for (std::size_t k = 0; k < target_curve.size(); ++k) {
    if (target_curve[k] > 1.0 + tol || draft_curve[k] > 1.0 + tol) return false;
    if (target_curve[k] + tol < draft_curve[k]) return false;
    if (k > 0 && (target_curve[k] + tol < target_curve[k - 1] || draft_curve[k] + tol < draft_curve[k - 1])) {
      return false;
    }
  }
  return true;
}

std::string CoverageReport::to_csv() const {
  std::string out = schema_line("coverage");
  out += "k,target_topk_mass,draft_topk_mass,positions\n";
  for (std::size_t k = 0; k < target_curve.size(); ++k) {
    out += std::to_string(k + 1) + "," + format_double(target_curve[k]) + "," + format_double(draft_curve[k]) + "," +
           std::to_string(positions) + "\n";
  }
  return out;
}

CoverageReport measure_coverage(const LanguageModel& draft, const LanguageModel& target,
                                const std::vector<Prefix>& prompts, const CoverageSettings& settings,
                                const SamplingConfig& warp, std::uint64_t seed) {
  const auto vocab = target.vocab_size();
  const std::size_t k_max =
      settings.k_max > 0 ? std::min(vocab, static_cast<std::size_t>(settings.k_max)) : vocab;
  CoverageReport report;
  report.target_curve.assign(k_max, 0.0);
  report.draft_curve.assign(k_max, 0.0);

  SamplingConfig view = settings.warped ? warp : SamplingConfig{};
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    // evaluation positions come from the target's own samples
    SamplingConfig gen = view;
    gen.seed = seed + i;
    gen.max_new_tokens = settings.positions_per_prompt;
    const auto continuation = generate_sequential(prompts[i], target, gen).tokens;
    Prefix context = prompts[i];
    for (std::size_t pos = 0; pos < continuation.size(); ++pos) {
      const auto p = apply_warp(target.next_distribution(context), view);
      const auto q = apply_warp(draft.next_distribution(context), view);
      const auto by_target = rank_desc(p.probs());
      const auto by_draft = rank_desc(q.probs());
      double tmass = 0.0;
      double dmass = 0.0;
      for (std::size_t k = 0; k < k_max; ++k) {
        tmass += p[by_target[k]];
        dmass += p[by_draft[k]];
        report.target_curve[k] += tmass;
        report.draft_curve[k] += dmass;
      }
      ++report.positions;
      context.push_back(continuation[pos]);
    }
  }
  if (report.positions > 0) {
    for (std::size_t k = 0; k < k_max; ++k) {
      report.target_curve[k] /= static_cast<double>(report.positions);
      report.draft_curve[k] /= static_cast<double>(report.positions);
    }
  }
  return report;
}

CoverageReport run_coverage(const ExperimentConfig& cfg) {
  auto models = load_model_pair(cfg.draft_spec, cfg.target_spec, cfg.base_dir);
  const auto prompts = resolve_prompts(cfg.prompts, *models.target, models.vocabulary);
  return measure_coverage(*models.draft, *models.target, prompts, cfg.coverage, cfg.sampling.front(),
                          cfg.seeds.front());
}

// ---------------------------------------------------------------------------
// Acceptance

std::string AcceptanceTable::to_csv() const {
  std::string out = schema_line("acceptance");
  out += "method,budget,temperature,top_p,mean_gen_rate,ci_lo,ci_hi,mean_rounds,runs,schedule\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.budget) + "," + format_double(r.temperature) + "," +
           format_double(r.top_p) + "," + format_double(r.mean_gen_rate) + "," + format_double(r.ci_lo) + "," +
           format_double(r.ci_hi) + "," + format_double(r.mean_rounds) + "," + std::to_string(r.runs) + "," +
           join_schedule(r.schedule) + "\n";
  }
  return out;
}

std::string AcceptanceTable::records_jsonl() const {
  std::string out;
  for (const auto& r : records) out += r.dump() + "\n";
  return out;
}

AcceptanceTable AcceptanceTable::from_csv(const std::string& csv) {
  AcceptanceTable table;
  std::istringstream in(csv);
  bool header_seen = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      if (line.rfind("method,budget", 0) != 0) throw std::invalid_argument("acceptance csv: unexpected header");
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() < 9) throw std::invalid_argument("acceptance csv: short row");
    AcceptanceRow r;
    r.method = cells[0];
    r.budget = std::stoi(cells[1]);
    r.temperature = std::stod(cells[2]);
    r.top_p = std::stod(cells[3]);
    r.mean_gen_rate = std::stod(cells[4]);
    r.ci_lo = std::stod(cells[5]);
    r.ci_hi = std::stod(cells[6]);
    r.mean_rounds = std::stod(cells[7]);
    r.runs = static_cast<std::size_t>(std::stoul(cells[8]));
    if (cells.size() > 9) r.schedule = split_schedule(cells[9]);
    table.rows.push_back(std::move(r));
  }
  return table;
}

const AcceptanceRow* AcceptanceTable::find(const std::string& method, int budget) const {
  for (const auto& r : rows) {
    if (r.method == method && r.budget == budget) return &r;
  }
  return nullptr;
}

AcceptanceCurve AcceptanceTable::curve(const std::string& method, std::optional<double> temperature,
                                       std::optional<double> top_p) const {
  AcceptanceCurve c;
  for (const auto& r : rows) {
    if (r.method != method) continue;
    if (temperature && r.temperature != *temperature) continue;
    if (top_p && r.top_p != *top_p) continue;
    c.points.push_back({r.budget, r.mean_gen_rate, r.mean_rounds});
  }
  std::sort(c.points.begin(), c.points.end(), [](const auto& a, const auto& b) { return a.budget < b.budget; });
  return c;
}

AcceptanceTable measure_acceptance(const ExperimentConfig& cfg, const LanguageModel& draft,
                                   const LanguageModel& target, const std::vector<Prefix>& prompts) {
  struct Cell {
    std::size_t method, budget, sampling, prompt, seed;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    if (cfg.methods[m] != "sx" && cfg.methods[m] != "si") {
      throw std::invalid_argument("acceptance: unknown method '" + cfg.methods[m] + "'");
    }
    for (std::size_t b = 0; b < cfg.budgets.size(); ++b)
      for (std::size_t s = 0; s < cfg.sampling.size(); ++s)
        for (std::size_t p = 0; p < prompts.size(); ++p)
          for (std::size_t sd = 0; sd < cfg.seeds.size(); ++sd) cells.push_back({m, b, s, p, sd});
  }

  std::vector<GenStats> results(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
    const auto& c = cells[i];
    SamplingConfig sc = cfg.sampling[c.sampling];
    sc.seed = cfg.seeds[c.seed];
    sc.max_new_tokens = cfg.max_new_tokens;
    const int budget = cfg.budgets[c.budget];
    if (cfg.methods[c.method] == "sx") {
      BuilderParams bp{budget, cfg.max_depth, cfg.batch_size, true};
      results[i] = generate_specexec(prompts[c.prompt], draft, target, bp, sc).stats;
    } else {
      const auto schedule = cfg.schedule_for(budget);
      results[i] = generate_specinfer(prompts[c.prompt], draft, target, schedule, sc).stats;
    }
  });

  AcceptanceTable table;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const auto& method = cfg.methods[c.method];
    SamplingConfig sc = cfg.sampling[c.sampling];
    sc.seed = cfg.seeds[c.seed];
    const int budget = cfg.budgets[c.budget];
    nlohmann::json extra = {{"cell", i}, {"budget", budget}, {"prompt", c.prompt}, {"L", cfg.max_new_tokens}};
    if (method == "sx") {
      extra["K"] = budget;
      extra["D"] = cfg.max_depth;
      extra["B"] = cfg.batch_size;
      extra["streams"] = {kGenerationStream};
    } else {
      extra["schedule"] = cfg.schedule_for(budget);
      extra["streams"] = {kSpecInferDraftStream, kSpecInferAcceptStream};
    }
    table.records.push_back(stats_record(method, results[i], sc, extra));

    const double rate = results[i].generation_rate();
    if (cfg.max_new_tokens > 0) {
      table.assertions.check(rate >= 1.0, "cell " + std::to_string(i) + ": generation rate below 1");
      if (budget == 1) {
        table.assertions.check(rate <= 2.0, "cell " + std::to_string(i) + ": budget 1 produced more than 2 tokens/call");
      }
    }
  }

  // aggregate in (method, budget, sampling) order
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    for (std::size_t b = 0; b < cfg.budgets.size(); ++b) {
      for (std::size_t s = 0; s < cfg.sampling.size(); ++s) {
        std::vector<double> rates;
        std::vector<double> rounds;
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (cells[i].method != m || cells[i].budget != b || cells[i].sampling != s) continue;
          rates.push_back(results[i].generation_rate());
          rounds.push_back(results[i].mean_draft_rounds());
        }
        AcceptanceRow row;
        row.method = cfg.methods[m];
        row.budget = cfg.budgets[b];
        row.temperature = cfg.sampling[s].temperature;
        row.top_p = cfg.sampling[s].top_p;
        const auto ci = bootstrap_mean_ci(rates, stream_id(row.method) ^ static_cast<std::uint64_t>(row.budget));
        row.mean_gen_rate = ci.mean;
        row.ci_lo = ci.lo;
        row.ci_hi = ci.hi;
        row.mean_rounds = mean_of(rounds);
        row.runs = rates.size();
        if (row.method == "si") row.schedule = cfg.schedule_for(row.budget);
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

AcceptanceTable run_acceptance(const ExperimentConfig& cfg) {
  auto models = load_model_pair(cfg.draft_spec, cfg.target_spec, cfg.base_dir);
  const auto prompts = resolve_prompts(cfg.prompts, *models.target, models.vocabulary);
  return measure_acceptance(cfg, *models.draft, *models.target, prompts);
}

// ---------------------------------------------------------------------------
// Throughput

std::string ThroughputTable::to_csv() const {
  std::string out = schema_line("throughput");
  out += "method,K,gen_rate,t_draft,t_forward,tok_per_s,speedup,best\n";
  for (const auto& r : rows) {
    const auto& e = r.estimate;
    out += r.method + "," + std::to_string(e.budget) + "," + format_double(e.gen_rate) + "," +
           format_double(e.t_draft) + "," + format_double(e.t_forward) + "," + format_double(e.tokens_per_second) +
           "," + format_double(e.speedup) + "," + (r.best ? "1" : "0") + "\n";
  }
  return out;
}

ThroughputTable throughput_from_curves(const CostModel& cm, const std::map<std::string, AcceptanceCurve>& curves) {
  ThroughputTable table;
  for (const auto& [method, curve] : curves) {
    if (curve.points.size() < 2) {
      table.assertions.check(false, method + ": curve needs at least two budgets");
      continue;
    }
    const auto choice = optimize_budget(cm, curve);
    for (const auto& e : choice.sweep) {
      table.rows.push_back({method, e, e.budget == choice.best.budget});
      table.assertions.check(choice.best.tokens_per_second >= e.tokens_per_second,
                             method + ": optimizer missed a better budget");
    }
  }
  return table;
}

ThroughputTable run_throughput(const ExperimentConfig& cfg) {
  if (!cfg.curve_path) throw std::invalid_argument("throughput: no acceptance curve configured");
  if (!cfg.cost_model) throw std::invalid_argument("throughput: no cost model configured");
  const auto table = AcceptanceTable::from_csv(read_text_file(*cfg.curve_path));
  std::map<std::string, AcceptanceCurve> curves;
  for (const auto& m : cfg.curve_methods) {
    auto c = table.curve(m, cfg.sampling.front().temperature, cfg.sampling.front().top_p);
    if (c.points.empty()) throw std::invalid_argument("throughput: curve has no rows for method '" + m + "'");
    curves.emplace(m, std::move(c));
  }
  return throughput_from_curves(*cfg.cost_model, curves);
}

// ---------------------------------------------------------------------------
// Equivalence

bool EquivalenceReport::all_pass() const {
  return std::all_of(cells.begin(), cells.end(), [](const auto& c) { return c.pass; });
}

std::string EquivalenceReport::to_jsonl() const {
  std::string out;
  for (const auto& c : cells) {
    nlohmann::json rec = {{"cell", c.index}, {"pass", c.pass}, {"repro", c.repro}};
    if (c.first_divergence) rec["first_divergence"] = *c.first_divergence;
    out += rec.dump() + "\n";
  }
  return out;
}

std::vector<nlohmann::json> default_equivalence_grid(int count, std::uint64_t base_seed) {
  static constexpr double kTemps[] = {0.0, 0.6, 1.0};
  static constexpr double kTopPs[] = {0.9, 1.0};
  static constexpr int kBudgets[] = {1, 4, 16, 64};
  static constexpr int kBatches[] = {1, 4, 16};
  static constexpr double kSharpness[] = {0.1, 0.5, 2.0};
  std::vector<nlohmann::json> cells;
  for (int i = 0; i < count; ++i) {
    Rng rng(base_seed, "equivalence-cell-" + std::to_string(i));
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)); };
    const int vocab = 3 + static_cast<int>(pick(8));
    const int order = 1 + static_cast<int>(pick(2));
    Prefix prompt(pick(5));
    for (auto& t : prompt) t = static_cast<TokenId>(pick(static_cast<std::size_t>(vocab)));
    cells.push_back({{"vocab_size", vocab},
                     {"order", order},
                     {"sharpness", kSharpness[pick(3)]},
                     {"target_seed", base_seed * 1000 + static_cast<std::uint64_t>(i) * 2 + 1},
                     {"draft_seed", base_seed * 1000 + static_cast<std::uint64_t>(i) * 2 + 2},
                     {"noise", 0.25 + rng.uniform()},
                     {"prompt", prompt},
                     {"seed", static_cast<std::uint64_t>(i) + 17},
                     {"temperature", kTemps[static_cast<std::size_t>(i) % 3]},
                     {"top_p", kTopPs[(static_cast<std::size_t>(i) / 3) % 2]},
                     {"K", kBudgets[pick(4)]},
                     {"D", 1 + static_cast<int>(pick(8))},
                     {"B", kBatches[pick(3)]},
                     {"L", 24}});
  }
  return cells;
}

namespace {

EquivalenceCell compare_cell(const LanguageModel& draft, const LanguageModel& target, const Prefix& prompt,
                             const BuilderParams& bp, const SamplingConfig& sc, std::size_t fault_offset) {
  EquivalenceCell cell;
  cell.specexec_tokens = generate_specexec(prompt, draft, target, bp, sc, {fault_offset}).tokens;
  cell.sequential_tokens = generate_sequential(prompt, target, sc).tokens;
  const auto n = std::min(cell.specexec_tokens.size(), cell.sequential_tokens.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (cell.specexec_tokens[i] != cell.sequential_tokens[i]) {
      cell.first_divergence = i;
      break;
    }
  }
  if (!cell.first_divergence && cell.specexec_tokens.size() != cell.sequential_tokens.size()) {
    cell.first_divergence = n;
  }
  cell.pass = !cell.first_divergence;
  return cell;
}

}  // namespace

EquivalenceCell run_equivalence_cell(const nlohmann::json& repro, std::size_t fault_offset) {
  const auto target = make_synthetic(repro.at("target_seed").get<std::uint64_t>(),
                                     repro.at("vocab_size").get<std::size_t>(), repro.at("sharpness").get<double>(),
                                     repro.at("order").get<int>());
  const auto draft = make_perturbed(target, repro.at("draft_seed").get<std::uint64_t>(), repro.at("noise").get<double>());
  SamplingConfig sc{repro.at("temperature").get<double>(), repro.at("top_p").get<double>(),
                    repro.at("seed").get<std::uint64_t>(), repro.at("L").get<int>()};
  BuilderParams bp{repro.at("K").get<int>(), repro.at("D").get<int>(), repro.at("B").get<int>(), true};
  auto cell = compare_cell(draft, target, repro.at("prompt").get<Prefix>(), bp, sc, fault_offset);
  cell.repro = repro;
  return cell;
}

EquivalenceReport run_equivalence(const ExperimentConfig& cfg) {
  EquivalenceReport report;
  if (cfg.target_spec.is_null()) {
    const auto grid = default_equivalence_grid(cfg.equivalence_cells, cfg.seeds.front());
    report.cells.resize(grid.size());
    parallel_for(grid.size(), cfg.workers, [&](std::size_t i) {
      report.cells[i] = run_equivalence_cell(grid[i], cfg.inject_fault);
      report.cells[i].index = i;
    });
    return report;
  }

  auto models = load_model_pair(cfg.draft_spec, cfg.target_spec, cfg.base_dir);
  const auto prompts = resolve_prompts(cfg.prompts, *models.target, models.vocabulary);
  struct Cell {
    std::size_t prompt, seed, sampling, budget;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < prompts.size(); ++p)
    for (std::size_t sd = 0; sd < cfg.seeds.size(); ++sd)
      for (std::size_t s = 0; s < cfg.sampling.size(); ++s)
        for (std::size_t b = 0; b < cfg.budgets.size(); ++b) cells.push_back({p, sd, s, b});

  report.cells.resize(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
    const auto& c = cells[i];
    SamplingConfig sc = cfg.sampling[c.sampling];
    sc.seed = cfg.seeds[c.seed];
    sc.max_new_tokens = cfg.max_new_tokens;
    BuilderParams bp{cfg.budgets[c.budget], cfg.max_depth, cfg.batch_size, true};
    auto cell = compare_cell(*models.draft, *models.target, prompts[c.prompt], bp, sc, cfg.inject_fault);
    cell.index = i;
    cell.repro = {{"prompt", prompts[c.prompt]}, {"seed", sc.seed},  {"temperature", sc.temperature},
                  {"top_p", sc.top_p},           {"K", bp.budget},   {"D", bp.max_depth},
                  {"B", bp.batch_size},          {"L", sc.max_new_tokens}, {"stream", kGenerationStream}};
    report.cells[i] = std::move(cell);
  });
  return report;
}

// ---------------------------------------------------------------------------
// Generation

GenerateResult run_generate(const ExperimentConfig& cfg, const std::string& method) {
  auto models = load_model_pair(cfg.draft_spec, cfg.target_spec, cfg.base_dir);
  const auto prompt = resolve_prompts(cfg.prompts, *models.target, models.vocabulary).front();
  SamplingConfig sc = cfg.sampling.front();
  sc.seed = cfg.seeds.front();
  sc.max_new_tokens = cfg.max_new_tokens;
  const int budget = cfg.budgets.front();

  GenerateResult result;
  result.method = method;
  if (method == "sx") {
    result.generation =
        generate_specexec(prompt, *models.draft, *models.target, BuilderParams{budget, cfg.max_depth, cfg.batch_size, true}, sc);
  } else if (method == "si") {
    result.generation = generate_specinfer(prompt, *models.draft, *models.target, cfg.schedule_for(budget), sc);
  } else if (method == "sequential") {
    result.generation = generate_sequential(prompt, *models.target, sc);
  } else {
    throw std::invalid_argument("generate: unknown method '" + method + "'");
  }
  if (models.vocabulary) {
    result.text = models.vocabulary->decode(result.generation.tokens);
  } else {
    for (std::size_t i = 0; i < result.generation.tokens.size(); ++i) {
      result.text += (i ? " " : "") + std::to_string(result.generation.tokens[i]);
    }
  }
  return result;
}

}  // namespace specexec
