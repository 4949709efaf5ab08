// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "specexec/costsim.hpp"
#include "specexec/engine.hpp"
#include "specexec/experiments.hpp"
#include "specexec/specinfer.hpp"
#include "specexec/tree.hpp"

using namespace specexec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

SamplingConfig random_warp(std::mt19937_64& gen) {
  static constexpr double kTemps[] = {0.0, 0.5, 1.0, 1.5};
  static constexpr double kTopPs[] = {0.8, 0.95, 1.0};
  SamplingConfig w;
  w.temperature = kTemps[gen() % 4];
  w.top_p = kTopPs[gen() % 3];
  return w;
}

// --------------------------------------------------------------------------

Outcome seed_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  const auto grid = default_equivalence_grid(100, 0);
  int pass = 0;
  int greedy = 0;
  bool greedy_seed_free = true;
  for (const auto& repro : grid) {
    const auto cell = run_equivalence_cell(repro);
    pass += cell.pass ? 1 : 0;
    if (repro.at("temperature").get<double>() == 0.0) {
      ++greedy;
      auto other = repro;
      other["seed"] = repro.at("seed").get<std::uint64_t>() + 1000;
      greedy_seed_free = greedy_seed_free && run_equivalence_cell(other).specexec_tokens == cell.specexec_tokens;
    }
  }
  // a corrupted cache must be caught somewhere on the grid
  int caught = 0;
  for (const auto& repro : grid) caught += run_equivalence_cell(repro, 1).pass ? 0 : 1;
  const double secs = seconds_since(start);
  return {pass == 100 && greedy_seed_free && caught > 0 && secs < 60.0,
          std::to_string(pass) + "/100 cells bit-exact, " + std::to_string(greedy) +
              " greedy cells seed-independent=" + (greedy_seed_free ? "yes" : "no") + ", fault caught in " +
              std::to_string(caught) + " cells, " + fmt("%.2f s", secs)};
}

Outcome sssp_optimality() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 gen(2024);
  int match = 0;
  for (int i = 0; i < 500; ++i) {
    const auto vocab = 2 + gen() % 7;
    const int order = 1 + static_cast<int>(gen() % 2);
    const auto draft = oracle::random_markov(gen, vocab, order, 0.2 + 0.1 * static_cast<double>(gen() % 10));
    const int k = 1 + static_cast<int>(gen() % 25);
    const int d = 1 + static_cast<int>(gen() % 4);
    const int b = 1 + static_cast<int>(gen() % 8);
    const auto warp = random_warp(gen);
    const Prefix root{static_cast<TokenId>(gen() % vocab)};
    const auto tree = build_sssp(root, draft, BuilderParams{k, d, b, true}, warp);
    match += oracle::tree_paths(tree) == oracle::brute_force_topk(root, draft, warp, true, k, d) ? 1 : 0;
  }
  const double secs = seconds_since(start);
  return {match == 500 && secs < 60.0, std::to_string(match) + "/500 match enumeration, " + fmt("%.2f s", secs)};
}

Outcome batch_invariance() {
  std::mt19937_64 gen(77);
  int same = 0;
  for (int i = 0; i < 100; ++i) {
    const auto vocab = 2 + gen() % 10;
    const auto draft = oracle::random_markov(gen, vocab, 1, 0.3);
    const int k = 1 + static_cast<int>(gen() % 64);
    const int d = 1 + static_cast<int>(gen() % 10);
    const auto warp = random_warp(gen);
    const Prefix root{0};
    const auto reference = oracle::tree_paths(build_sssp(root, draft, BuilderParams{k, d, 1, true}, warp));
    bool ok = true;
    for (int b : {2, 4, 16}) ok = ok && oracle::tree_paths(build_sssp(root, draft, {k, d, b, true}, warp)) == reference;
    same += ok ? 1 : 0;
  }
  return {same == 100, std::to_string(same) + "/100 instances identical across B in {1,2,4,16}"};
}

Outcome specinfer_preservation() {
  constexpr int kRuns = 100000;
  std::mt19937_64 gen(9);
  const std::size_t vocab = 5;
  const auto target = oracle::random_markov(gen, vocab, 1, 0.6);
  const auto draft = oracle::random_markov(gen, vocab, 1, 0.6);
  const Prefix prompt{2};
  double worst_first = 0.0;
  double worst_joint = 0.0;
  for (const SamplingConfig warp : {SamplingConfig{1.0, 1.0, 0, 2}, SamplingConfig{0.7, 0.9, 0, 2}}) {
    const std::vector<int> schedule{3, 2};
    std::vector<double> first(vocab, 0.0);
    std::vector<double> joint(vocab * vocab, 0.0);
    for (int r = 0; r < kRuns; ++r) {
      SamplingConfig cfg = warp;
      cfg.seed = static_cast<std::uint64_t>(r) + 1;
      const auto out = generate_specinfer(prompt, draft, target, schedule, cfg).tokens;
      first[static_cast<std::size_t>(out[0])] += 1.0;
      joint[static_cast<std::size_t>(out[0]) * vocab + static_cast<std::size_t>(out[1])] += 1.0;
    }
    const auto p1 = apply_warp(target.next_distribution(prompt), warp);
    std::vector<double> p1v(p1.probs().begin(), p1.probs().end());
    std::vector<double> p12(vocab * vocab, 0.0);
    for (std::size_t a = 0; a < vocab; ++a) {
      const auto p2 = apply_warp(target.next_distribution(Prefix{2, static_cast<TokenId>(a)}), warp);
      for (std::size_t b = 0; b < vocab; ++b) p12[a * vocab + b] = p1[a] * p2[b];
    }
    worst_first = std::max(worst_first, oracle::empirical_tv(first, p1v));
    worst_joint = std::max(worst_joint, oracle::empirical_tv(joint, p12));
  }
  return {worst_first <= 0.01 && worst_joint <= 0.02,
          fmt("first-token TV %.4f (<= 0.01), 2-token joint TV %.4f (<= 0.02), 1e5 runs per warp", worst_first,
              worst_joint)};
}

Outcome specexec_consumption() {
  constexpr int kTrials = 100000;
  std::mt19937_64 gen(31);
  const std::size_t vocab = 6;
  const auto target = oracle::random_markov(gen, vocab, 1, 0.5);
  const auto draft = oracle::random_markov(gen, vocab, 1, 0.5);
  double worst = 0.0;
  for (const SamplingConfig warp : {SamplingConfig{1.0, 1.0, 0, 1}, SamplingConfig{0.6, 0.9, 0, 1}}) {
    const auto cache = precompute(Prefix{1}, draft, target, BuilderParams{8, 3, 2, true}, warp);
    // check the root and every expanded child
    for (NodeId at = 0; at < static_cast<NodeId>(cache.tree().node_count()); ++at) {
      const auto& node = cache.tree().node(at);
      if (node.children.empty()) continue;
      // expected mass straight from the target, not from the cache under test
      const auto p = apply_warp(target.next_distribution(cache.tree().full_prefix(at)), warp);
      // buckets: one per child, plus "stepped off the tree"
      std::vector<double> expected;
      double covered = 0.0;
      for (auto c : node.children) {
        expected.push_back(p[static_cast<std::size_t>(cache.tree().node(c).token)]);
        covered += expected.back();
      }
      expected.push_back(std::max(0.0, 1.0 - covered));
      std::vector<double> counts(expected.size(), 0.0);
      ProbCache positioned = cache;
      for (auto token : cache.tree().path_tokens(at)) positioned.advance(token);
      for (int t = 0; t < kTrials; ++t) {
        ProbCache cursor = positioned;
        Rng rng(static_cast<std::uint64_t>(t) + 1, kGenerationStream);
        const auto token = sample(apply_warp(cursor.current(), warp), rng);
        const auto before = cursor.cursor();
        if (cursor.advance(token)) {
          const auto& kids = cache.tree().node(before).children;
          counts[static_cast<std::size_t>(std::find(kids.begin(), kids.end(), cursor.cursor()) - kids.begin())] += 1.0;
        } else {
          counts.back() += 1.0;
        }
      }
      worst = std::max(worst, oracle::empirical_tv(counts, expected));
    }
  }
  return {worst <= 0.01, fmt("worst per-node consumption TV %.4f (<= 0.01), 1e5 trials per node", worst)};
}

Outcome outscaling() {
  const auto start = std::chrono::steady_clock::now();
  const nlohmann::json base = {{"kind", "synthetic"}, {"seed", 11}, {"vocab_size", 32}, {"sharpness", 0.005}};
  const nlohmann::json doc = {
      {"experiment", "acceptance"},
      {"target", base},
      {"draft", {{"kind", "perturbed"}, {"base", base}, {"seed", 12}, {"noise", 1.0}}},
      {"prompts", {{"source", "sampled"}, {"count", 10}, {"length", 4}, {"seed", 5}}},
      {"budgets", {1, 16, 64, 256, 1024}},
      {"sampling", {{{"temperature", 1.0}, {"top_p", 1.0}}}},
      {"seeds", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}},
      {"max_new_tokens", 64},
      {"max_depth", 64},
      {"batch_size", 16},
      {"si_depth", 8}};
  const auto cfg = ExperimentConfig::from_json(doc);
  auto models = load_model_pair(cfg.draft_spec, cfg.target_spec);
  // sharpness check: mean top-1 mass of the target rows
  const auto& target = dynamic_cast<const MarkovModel&>(*models.target);
  double top1 = 0.0;
  for (std::size_t r = 0; r < target.row_count(); ++r) {
    const auto& row = target.row(r);
    top1 += row[static_cast<std::size_t>(row.argmax())];
  }
  top1 /= static_cast<double>(target.row_count());
  const auto table = run_acceptance(cfg);
  const auto* sx = table.find("sx", 1024);
  const auto* si = table.find("si", 1024);
  const auto* si_prev = table.find("si", 256);
  const double si_gain = (si->mean_gen_rate - si_prev->mean_gen_rate) / si_prev->mean_gen_rate;
  const bool ok = table.assertions.ok() && sx->ci_lo > si->ci_hi && si_gain < 0.05 && std::abs(top1 - 0.9) < 0.05;
  return {ok, fmt("target top-1 %.3f; K=1024 SX %.2f [%.2f, ", top1, sx->mean_gen_rate, sx->ci_lo, sx->ci_hi) +
                  fmt("%.2f] vs SI %.2f [%.2f, %.2f]", sx->ci_hi, si->mean_gen_rate, si->ci_lo, si->ci_hi) +
                  fmt("; SI 256->1024 gain %.2f%% (< 5%%), %.1f s", 100.0 * si_gain, seconds_since(start))};
}

Outcome beam_domination() {
  std::mt19937_64 gen(5150);
  int dominated = 0;
  int strictly = 0;
  for (int i = 0; i < 200; ++i) {
    const auto vocab = 2 + gen() % 8;
    const auto draft = oracle::random_markov(gen, vocab, 1 + static_cast<int>(gen() % 2), 0.4);
    const int width = 1 + static_cast<int>(gen() % 6);
    const int len = 1 + static_cast<int>(gen() % 5);
    const auto warp = random_warp(gen);
    const Prefix root{0};
    const auto beam = build_beam(root, draft, width, len, warp);
    const int k = static_cast<int>(beam.size());
    const auto sssp = build_sssp(root, draft, BuilderParams{k, len, 4, true}, warp);
    // masses scored by the oracle, not by the trees' own bookkeeping
    const double beam_mass = oracle::path_mass(root, draft, warp, oracle::tree_paths(beam));
    const double sssp_mass = oracle::path_mass(root, draft, warp, oracle::tree_paths(sssp));
    const bool ok = sssp.size() == beam.size() && sssp_mass >= beam_mass - 1e-12;
    dominated += ok ? 1 : 0;
    strictly += sssp_mass > beam_mass + 1e-12 ? 1 : 0;
  }
  return {dominated == 200, std::to_string(dominated) + "/200 instances SSSP mass >= beam mass (" +
                                std::to_string(strictly) + " strictly greater)"};
}

Outcome cost_anchor() {
  auto cm = cost_preset("pcie4-16bit-70b");
  const double t = forward_time(cm, 1);
  const double floor = 140.0 / 31.5;
  const double rel = std::abs(t - floor) / floor;
  bool above = true;
  double min_seen = INFINITY;
  for (double bw = 31.1e9; bw >= 1e9; bw -= 0.1e9) {
    cm.bandwidth = bw;
    const double v = forward_time(cm, 1);
    min_seen = std::min(min_seen, v);
    above = above && v > 4.5;
  }
  return {rel <= 0.01 && above, fmt("forward_time(n=1) = %.4f s vs floor %.4f s (rel err %.2e); ", t, floor, rel) +
                                    fmt("min over bandwidth <= 31.1 GB/s: %.4f s (> 4.5)", min_seen)};
}

Outcome load_plateau() {
  std::vector<CostModel> models{cost_preset("pcie4-16bit-70b"), cost_preset("pcie4-gptq-70b")};
  auto custom = cost_preset("pcie4-16bit-70b");
  custom.fixed_overhead = 0.25;
  custom.prefetch_fraction = 0.3;
  models.push_back(custom);
  bool ok = true;
  std::string crossovers;
  for (const auto& cm : models) {
    const double x = cm.crossover_tokens();
    const double flat = forward_time(cm, 1);
    for (int n = 1; n <= cm.n_max; ++n) {
      const double v = forward_time(cm, n);
      if (n <= std::floor(x)) {
        ok = ok && v == flat;
      } else {
        ok = ok && v == cm.fixed_overhead + n / cm.compute_rate && v > forward_time(cm, n - 1);
      }
    }
    crossovers += (crossovers.empty() ? "" : ", ") + fmt("%.0f", x);
  }
  return {ok, "exactly constant below and linear above crossover for 3 cost models (crossovers " + crossovers +
                  " tokens)"};
}

Outcome coverage_monotonicity() {
  const std::string data = SPECEXEC_SOURCE_DIR "/data/";
  std::vector<nlohmann::json> docs;
  const nlohmann::json small = {{"kind", "ngram"}, {"corpus", data + "fables.txt"}, {"order", 2}, {"smoothing", 0.5}};
  const nlohmann::json big = {{"kind", "ngram"}, {"corpus", data + "fables.txt"}, {"order", 4}, {"smoothing", 0.01}};
  const nlohmann::json syn = {{"kind", "synthetic"}, {"seed", 3}, {"vocab_size", 24}, {"sharpness", 0.05}};
  const nlohmann::json pert = {{"kind", "perturbed"}, {"base", syn}, {"seed", 4}, {"noise", 1.5}};
  for (const auto& mode : {"raw", "warped"}) {
    docs.push_back({{"experiment", "coverage"},
                    {"draft", small},
                    {"target", big},
                    {"prompts", {{"source", "file"}, {"path", data + "prompts.txt"}}},
                    {"coverage", {{"positions_per_prompt", 64}, {"mode", mode}}},
                    {"sampling", {{{"temperature", 0.6}, {"top_p", 0.9}}}}});
    docs.push_back({{"experiment", "coverage"},
                    {"draft", pert},
                    {"target", syn},
                    {"prompts", {{"source", "sampled"}, {"count", 8}, {"length", 3}}},
                    {"coverage", {{"positions_per_prompt", 64}, {"mode", mode}}},
                    {"sampling", {{{"temperature", 0.6}, {"top_p", 0.9}}}}});
  }
  int ok = 0;
  for (const auto& doc : docs) ok += run_coverage(ExperimentConfig::from_json(doc)).invariants_hold() ? 1 : 0;
  return {ok == static_cast<int>(docs.size()),
          std::to_string(ok) + "/" + std::to_string(docs.size()) + " coverage runs monotone, bounded, dominated"};
}

Outcome mask_correctness() {
  std::mt19937_64 gen(1234);
  int ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const int nodes = 1 + static_cast<int>(gen() % 200);
    const auto tree = oracle::random_tree(gen, nodes, 6);
    const auto flat = flatten(tree);
    bool good = flat.dim() == tree.node_count();
    for (std::size_t r = 0; good && r < flat.dim(); ++r) {
      for (std::size_t c = 0; c < flat.dim(); ++c) {
        if (flat.attends(r, c) != oracle::on_root_path(tree, flat.order[r], flat.order[c])) {
          good = false;
          break;
        }
      }
    }
    ok += good ? 1 : 0;
  }
  return {ok == 1000, std::to_string(ok) + "/1000 random trees (1..200 nodes) match root-path walk"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"seed equivalence", seed_equivalence},
      {"SSSP optimality", sssp_optimality},
      {"batch invariance", batch_invariance},
      {"SpecInfer distribution preservation", specinfer_preservation},
      {"SpecExec acceptance semantics", specexec_consumption},
      {"outscaling shape", outscaling},
      {"beam suboptimality", beam_domination},
      {"cost-model anchor", cost_anchor},
      {"load-bound plateau", load_plateau},
      {"coverage monotonicity", coverage_monotonicity},
      {"mask correctness", mask_correctness},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    failed += out.pass ? 0 : 1;
    std::printf("[%s] %2zu %s: %s\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
