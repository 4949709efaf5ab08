#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "specexec/config.hpp"
#include "specexec/costsim.hpp"
#include "specexec/engine.hpp"

namespace specexec {

inline constexpr int kCsvSchemaVersion = 1;

/// Failed checks collected while running an experiment; empty means pass.
struct Assertions {
  std::vector<std::string> failures;
  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  bool ok() const { return failures.empty(); }
};

// ---------------------------------------------------------------------------
// Coverage

struct CoverageReport {
  std::vector<double> target_curve;  // mass of the target's own top-k
  std::vector<double> draft_curve;   // target mass of the draft's top-k
  std::size_t positions = 0;

  /// Both curves non-decreasing and at most 1, target curve on top.
  bool invariants_hold(double tol = 1e-9) const;
  std::string to_csv() const;
};

CoverageReport measure_coverage(const LanguageModel& draft, const LanguageModel& target,
                                const std::vector<Prefix>& prompts, const CoverageSettings& settings,
                                const SamplingConfig& warp, std::uint64_t seed);

CoverageReport run_coverage(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Acceptance vs budget

struct AcceptanceRow {
  std::string method;
  int budget = 0;
  double temperature = 0.0;
  double top_p = 1.0;
  double mean_gen_rate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double mean_rounds = 0.0;
  std::size_t runs = 0;
  std::vector<int> schedule;  // SpecInfer only
};

struct AcceptanceTable {
  std::vector<AcceptanceRow> rows;
  std::vector<nlohmann::json> records;  // one per run, cell order
  Assertions assertions;

  std::string to_csv() const;
  std::string records_jsonl() const;
  static AcceptanceTable from_csv(const std::string& csv);

  const AcceptanceRow* find(const std::string& method, int budget) const;
  /// Curve for one method; rows at other sampling configs are skipped when
  /// temperature/top_p are given.
  AcceptanceCurve curve(const std::string& method, std::optional<double> temperature = std::nullopt,
                        std::optional<double> top_p = std::nullopt) const;
};

AcceptanceTable run_acceptance(const ExperimentConfig& cfg);

/// Same experiment against already-built models.
AcceptanceTable measure_acceptance(const ExperimentConfig& cfg, const LanguageModel& draft,
                                   const LanguageModel& target, const std::vector<Prefix>& prompts);

// ---------------------------------------------------------------------------
// Simulated throughput

struct ThroughputRow {
  std::string method;
  ThroughputEstimate estimate;
  bool best = false;
};

struct ThroughputTable {
  std::vector<ThroughputRow> rows;
  Assertions assertions;
  std::string to_csv() const;
};

ThroughputTable throughput_from_curves(const CostModel& cm, const std::map<std::string, AcceptanceCurve>& curves);
ThroughputTable run_throughput(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Seed equivalence

struct EquivalenceCell {
  std::size_t index = 0;
  nlohmann::json repro;  // everything needed to rerun this cell alone
  bool pass = false;
  std::optional<std::size_t> first_divergence;
  Prefix specexec_tokens;
  Prefix sequential_tokens;
};

struct EquivalenceReport {
  std::vector<EquivalenceCell> cells;
  bool all_pass() const;
  std::string to_jsonl() const;
};

/// Self-contained synthetic grid covering t in {0, 0.6, 1} and top_p in
/// {0.9, 1}, varying the builder parameters from cell to cell.
std::vector<nlohmann::json> default_equivalence_grid(int count, std::uint64_t base_seed = 0);

/// Runs one cell described by a repro document.
EquivalenceCell run_equivalence_cell(const nlohmann::json& repro, std::size_t fault_offset = 0);

EquivalenceReport run_equivalence(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Generation

struct GenerateResult {
  std::string method;
  Generation generation;
  std::string text;  // detokenized new tokens
};

/// method: "sx", "si" or "sequential". Every list in the config
/// contributes only its first entry.
GenerateResult run_generate(const ExperimentConfig& cfg, const std::string& method);

std::string format_double(double v);

}  // namespace specexec
