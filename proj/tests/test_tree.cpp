#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "oracles.hpp"
#include "specexec/config.hpp"
#include "specexec/tree.hpp"

using namespace specexec;

namespace {

MarkovModel golden_draft() {
  return MarkovModel(4, 1,
                     {Distribution({0.50, 0.30, 0.15, 0.05}), Distribution({0.10, 0.60, 0.20, 0.10}),
                      Distribution({0.25, 0.25, 0.40, 0.10}), Distribution({0.70, 0.10, 0.10, 0.10})});
}

}  // namespace

TEST_CASE("tree bookkeeping") {
  DraftTree t(Prefix{7});
  const auto a = t.add_child(kRootNode, 2, std::log(0.5));
  const auto b = t.add_child(a, 1, std::log(0.25));
  t.add_child(kRootNode, 3, std::log(0.5));
  CHECK(t.size() == 3);
  CHECK(t.node_count() == 4);
  CHECK(t.node(b).depth == 2);
  CHECK(t.node(b).cum_logprob == doctest::Approx(std::log(0.125)));
  CHECK(cumulative_logprob(t, b) == doctest::Approx(std::log(0.125)));
  CHECK(t.path_tokens(b) == Prefix{2, 1});
  CHECK(t.full_prefix(b) == Prefix{7, 2, 1});
  CHECK(t.find_child(a, 1) == b);
  CHECK_FALSE(t.find_child(a, 2).has_value());
  CHECK(t.max_depth() == 2);
  CHECK(tree_mass(t) == doctest::Approx(0.5 + 0.125 + 0.5));
  CHECK(t.all_prefixes().size() == 4);
}

TEST_CASE("tree rejects malformed edges") {
  DraftTree t(Prefix{});
  CHECK_THROWS_AS(t.add_child(kRootNode, 0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(t.add_child(kRootNode, 0, -INFINITY), std::invalid_argument);
  CHECK_THROWS_AS(t.add_child(kRootNode, -1, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(t.add_child(5, 0, -1.0), std::out_of_range);
  t.add_child(kRootNode, 0, -1.0);
  CHECK_THROWS_AS(t.add_child(kRootNode, 0, -2.0), std::invalid_argument);
  CHECK_THROWS_AS(t.node(9), std::out_of_range);
}

TEST_CASE("tree json round trip") {
  const auto tree = build_sssp(Prefix{1}, golden_draft(), BuilderParams{10, 3, 2, true}, SamplingConfig{});
  const auto back = DraftTree::from_json(tree.to_json());
  CHECK(back.to_json() == tree.to_json());
}

TEST_CASE("sssp builder matches the golden tree") {
  const auto golden =
      nlohmann::json::parse(read_text_file(SPECEXEC_SOURCE_DIR "/tests/golden/sssp_tree.json"));
  const auto tree =
      build_sssp(Prefix{1, 3}, golden_draft(), BuilderParams{12, 4, 3, true}, SamplingConfig{0.8, 0.95, 0, 1});
  const auto doc = tree.to_json();
  CHECK(doc.at("root_prefix") == golden.at("root_prefix"));
  REQUIRE(doc.at("nodes").size() == golden.at("nodes").size());
  for (std::size_t i = 0; i < doc.at("nodes").size(); ++i) {
    const auto& a = doc.at("nodes")[i];
    const auto& b = golden.at("nodes")[i];
    CHECK(a.at("parent") == b.at("parent"));
    CHECK(a.at("token") == b.at("token"));
    CHECK(a.at("cum_logprob").get<double>() == doctest::Approx(b.at("cum_logprob").get<double>()).epsilon(1e-12));
  }
}

TEST_CASE("sssp builder equals exhaustive enumeration on small instances") {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 100; ++i) {
    const auto vocab = 2 + gen() % 5;
    const auto draft = oracle::random_markov(gen, vocab, 1, 0.5);
    const int k = 1 + static_cast<int>(gen() % 20);
    const int d = 1 + static_cast<int>(gen() % 4);
    const bool warp_draft = gen() % 2 == 0;
    const SamplingConfig warp{0.7, 0.9, 0, 1};
    const auto tree = build_sssp(Prefix{0}, draft, BuilderParams{k, d, 1, warp_draft}, warp);
    CHECK(oracle::tree_paths(tree) == oracle::brute_force_topk(Prefix{0}, draft, warp, warp_draft, k, d));
  }
}

TEST_CASE("sssp trees are prefix-closed, bounded and ordered by key") {
  const auto draft = make_synthetic(4, 10, 0.2, 1);
  BuildStats stats;
  const auto tree = build_sssp(Prefix{}, draft, BuilderParams{50, 6, 4, true}, SamplingConfig{}, &stats);
  CHECK(tree.size() == 50);
  CHECK(tree.max_depth() <= 6);
  for (std::size_t i = 1; i < tree.node_count(); ++i) {
    const auto& n = tree.nodes()[i];
    CHECK(n.parent < n.id);
    // best-first insertion: each node is no more likely than the one before
    if (i > 1) CHECK(n.cum_logprob <= tree.nodes()[i - 1].cum_logprob);
  }
  CHECK(stats.rounds >= 1);
  CHECK(stats.prefixes_evaluated >= static_cast<std::size_t>(stats.rounds));
}

TEST_CASE("sssp draft rounds: at least the tree depth, at most K with B = 1") {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 50; ++i) {
    const auto draft = oracle::random_markov(gen, 2 + gen() % 6, 1, 0.3);
    const int k = 1 + static_cast<int>(gen() % 30);
    BuildStats stats;
    const auto tree = build_sssp(Prefix{0}, draft, BuilderParams{k, 8, 1, true}, SamplingConfig{}, &stats);
    CHECK(stats.rounds >= tree.max_depth());
    CHECK(stats.rounds <= k);
  }
}

TEST_CASE("sssp with K = 1 drafts the greedy token") {
  const auto draft = golden_draft();
  const auto tree = build_sssp(Prefix{2}, draft, BuilderParams{1, 5, 1, true}, SamplingConfig{});
  REQUIRE(tree.size() == 1);
  CHECK(tree.node(1).token == 2);
}

TEST_CASE("sssp stops when the support is exhausted") {
  // one-hot rows: a single path, so depth caps the tree below K
  const auto draft = MarkovModel::stationary(Distribution::one_hot(3, 1));
  const auto tree = build_sssp(Prefix{}, draft, BuilderParams{100, 4, 2, true}, SamplingConfig{});
  CHECK(tree.size() == 4);
  CHECK(tree.max_depth() == 4);
}

TEST_CASE("builder parameter validation") {
  const auto draft = golden_draft();
  CHECK_THROWS_AS(build_sssp(Prefix{}, draft, BuilderParams{0, 1, 1, true}, SamplingConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(build_sssp(Prefix{}, draft, BuilderParams{1, 0, 1, true}, SamplingConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(build_sssp(Prefix{}, draft, BuilderParams{1, 1, 0, true}, SamplingConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(build_beam(Prefix{}, draft, 0, 2, SamplingConfig{}), std::invalid_argument);
}

TEST_CASE("beam builder matches a textbook beam search") {
  std::mt19937_64 gen(21);
  for (int i = 0; i < 100; ++i) {
    const auto draft = oracle::random_markov(gen, 2 + gen() % 6, 1 + static_cast<int>(gen() % 2), 0.4);
    const int width = 1 + static_cast<int>(gen() % 5);
    const int len = 1 + static_cast<int>(gen() % 5);
    const SamplingConfig warp{0.9, 0.95, 0, 1};
    const auto tree = build_beam(Prefix{1}, draft, width, len, warp);
    CHECK(oracle::tree_paths(tree) == oracle::beam_paths(Prefix{1}, draft, warp, width, len));
  }
}

TEST_CASE("beam search can miss a better tree") {
  // a wide beam spends nodes on shallow siblings SSSP would skip
  const auto draft = MarkovModel(3, 1,
                                 {Distribution({0.9, 0.05, 0.05}), Distribution({0.34, 0.33, 0.33}),
                                  Distribution({0.34, 0.33, 0.33})});
  const SamplingConfig warp;
  const auto beam = build_beam(Prefix{0}, draft, 2, 3, warp);
  const auto sssp = build_sssp(Prefix{0}, draft, BuilderParams{static_cast<int>(beam.size()), 3, 1, true}, warp);
  CHECK(tree_mass(sssp) > tree_mass(beam) + 1e-6);
}

TEST_CASE("stochastic drafting merges duplicates and records draw order") {
  const auto draft = MarkovModel::stationary(Distribution({0.9, 0.1}));
  Rng rng(5, "specinfer-draft");
  const std::vector<int> schedule{4, 2};
  BuildStats stats;
  const auto tree = build_stochastic(Prefix{}, draft, schedule, rng, SamplingConfig{}, true, &stats);
  CHECK(stats.rounds == 2);
  CHECK(rng.counter() == 4 + 8);  // each unit of multiplicity draws its own children
  const auto order = tree.draw_order(kRootNode);
  CHECK(order.size() == 4);
  std::uint32_t total = 0;
  for (auto c : tree.node(kRootNode).children) total += tree.node(c).multiplicity;
  CHECK(total == 4);
  REQUIRE(tree.draft_distribution(kRootNode) != nullptr);
  CHECK((*tree.draft_distribution(kRootNode))[0] == doctest::Approx(0.9));
  CHECK(tree.size() <= schedule_capacity(schedule));
  CHECK(schedule_capacity(schedule) == 4 + 8);
  CHECK_THROWS_AS(build_stochastic(Prefix{}, draft, std::vector<int>{}, rng, SamplingConfig{}), std::invalid_argument);
}

TEST_CASE("flattened mask: chain and star") {
  DraftTree chain(Prefix{0});
  chain.add_child(chain.add_child(chain.add_child(kRootNode, 1, -1.0), 2, -1.0), 3, -1.0);
  const auto fc = flatten(chain);
  for (std::size_t r = 0; r < fc.dim(); ++r)
    for (std::size_t c = 0; c < fc.dim(); ++c) CHECK(fc.attends(r, c) == (c <= r));

  DraftTree star(Prefix{0});
  for (int t = 0; t < 4; ++t) star.add_child(kRootNode, t, -1.0);
  const auto fs = flatten(star);
  for (std::size_t r = 1; r < fs.dim(); ++r) {
    CHECK(fs.attends(r, 0));
    for (std::size_t c = 1; c < fs.dim(); ++c) CHECK(fs.attends(r, c) == (r == c));
  }
}

TEST_CASE("flattened mask equals a root-path walk on random trees") {
  std::mt19937_64 gen(8);
  for (int i = 0; i < 100; ++i) {
    const auto tree = oracle::random_tree(gen, 1 + static_cast<int>(gen() % 60), 4);
    const auto flat = flatten(tree);
    REQUIRE(flat.dim() == tree.node_count());
    for (std::size_t r = 0; r < flat.dim(); ++r)
      for (std::size_t c = 0; c < flat.dim(); ++c)
        REQUIRE(flat.attends(r, c) == oracle::on_root_path(tree, flat.order[r], flat.order[c]));
  }
}
