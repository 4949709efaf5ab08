#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace specexec {

/// Hardware parameters for an offloaded forward pass.
struct CostModel {
  double target_bytes = 0.0;
  double draft_bytes = 0.0;
  double bandwidth = 0.0;          // host -> device bytes/s; +inf allowed
  double compute_rate = 0.0;       // tokens/s at saturation
  double fixed_overhead = 0.0;     // seconds per target call
  double prefetch_fraction = 0.0;  // share of target_bytes loaded while drafting
  double draft_step_time = 0.0;    // seconds per batched draft call
  int n_max = 8192;                // largest token count the linear compute term is trusted for

  void validate() const;

  nlohmann::json to_json() const;
  static CostModel from_json(const nlohmann::json& doc);

  /// Token count at which load time and compute time are equal.
  double crossover_tokens() const;
};

/// Named presets: "pcie4-16bit-70b", "pcie4-gptq-70b".
CostModel cost_preset(const std::string& name);
std::vector<std::string> cost_preset_names();

/// fixed_overhead + max((1 - prefetch) * target_bytes / bandwidth, n / compute_rate)
double forward_time(const CostModel& cm, int n_tokens);

struct AcceptancePoint {
  int budget = 0;
  double gen_rate = 0.0;
  double rounds = 0.0;  // mean batched draft calls per target iteration
};

/// Measured generation rate against draft budget; budgets strictly increasing.
struct AcceptanceCurve {
  std::vector<AcceptancePoint> points;

  void validate() const;
  /// Linear interpolation between measured budgets; throws std::out_of_range
  /// outside [first, last].
  AcceptancePoint at(double budget) const;
};

struct ThroughputEstimate {
  int budget = 0;
  double gen_rate = 0.0;
  double t_draft = 0.0;
  double t_forward = 0.0;
  double tokens_per_second = 0.0;
  double speedup = 0.0;  // against one token per forward_time(cm, 1)
};

ThroughputEstimate estimate_throughput(const CostModel& cm, const AcceptanceCurve& curve, int budget);

struct BudgetChoice {
  ThroughputEstimate best;
  std::vector<ThroughputEstimate> sweep;
};

/// Exhaustive sweep over the curve's budgets.
BudgetChoice optimize_budget(const CostModel& cm, const AcceptanceCurve& curve);

}  // namespace specexec
