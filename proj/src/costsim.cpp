#include "specexec/costsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace specexec {

void CostModel::validate() const {
  if (!(target_bytes > 0.0)) throw std::invalid_argument("cost model: target_bytes must be > 0");
  if (!(draft_bytes >= 0.0)) throw std::invalid_argument("cost model: draft_bytes must be >= 0");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("cost model: bandwidth must be > 0");
  if (!(compute_rate > 0.0) || !std::isfinite(compute_rate)) {
    throw std::invalid_argument("cost model: compute_rate must be finite and > 0");
  }
  if (!(fixed_overhead >= 0.0)) throw std::invalid_argument("cost model: fixed_overhead must be >= 0");
  if (!(prefetch_fraction >= 0.0 && prefetch_fraction <= 1.0)) {
    throw std::invalid_argument("cost model: prefetch_fraction must be in [0, 1]");
  }
  if (!(draft_step_time >= 0.0)) throw std::invalid_argument("cost model: draft_step_time must be >= 0");
  if (n_max < 1) throw std::invalid_argument("cost model: n_max must be >= 1");
}

nlohmann::json CostModel::to_json() const {
  // JSON has no infinity; an omitted bandwidth reads back as unlimited
  nlohmann::json doc = {{"target_bytes", target_bytes},     {"draft_bytes", draft_bytes},
                        {"compute_rate", compute_rate},     {"fixed_overhead", fixed_overhead},
                        {"prefetch_fraction", prefetch_fraction}, {"draft_step_time", draft_step_time},
                        {"n_max", n_max}};
  if (std::isfinite(bandwidth)) doc["bandwidth"] = bandwidth;
  return doc;
}

CostModel CostModel::from_json(const nlohmann::json& doc) {
  CostModel cm;
  cm.target_bytes = doc.at("target_bytes").get<double>();
  cm.draft_bytes = doc.value("draft_bytes", 0.0);
  cm.bandwidth = doc.value("bandwidth", std::numeric_limits<double>::infinity());
  cm.compute_rate = doc.at("compute_rate").get<double>();
  cm.fixed_overhead = doc.value("fixed_overhead", 0.0);
  cm.prefetch_fraction = doc.value("prefetch_fraction", 0.0);
  cm.draft_step_time = doc.value("draft_step_time", 0.0);
  cm.n_max = doc.value("n_max", 8192);
  cm.validate();
  return cm;
}

double CostModel::crossover_tokens() const {
  return compute_rate * (1.0 - prefetch_fraction) * target_bytes / bandwidth;
}

std::vector<std::string> cost_preset_names() { return {"pcie4-16bit-70b", "pcie4-gptq-70b"}; }

CostModel cost_preset(const std::string& name) {
  CostModel cm;
  if (name == "pcie4-16bit-70b") {
    // 70B parameters at 2 bytes over PCIe 4.0 x16, 7B 16-bit draft in VRAM
    cm.target_bytes = 140e9;
    cm.draft_bytes = 14e9;
    cm.bandwidth = 31.5e9;
    cm.compute_rate = 1000.0;
    cm.fixed_overhead = 0.0;
    cm.prefetch_fraction = 0.0;
    cm.draft_step_time = 0.03;
  } else if (name == "pcie4-gptq-70b") {
    // 4-bit weights: a quarter of the bytes, slower dequantizing kernels
    cm.target_bytes = 35e9;
    cm.draft_bytes = 3.5e9;
    cm.bandwidth = 31.5e9;
    cm.compute_rate = 400.0;
    cm.fixed_overhead = 0.0;
    cm.prefetch_fraction = 0.0;
    cm.draft_step_time = 0.03;
  } else {
    throw std::invalid_argument("unknown cost preset '" + name + "'");
  }
  cm.validate();
  return cm;
}

double forward_time(const CostModel& cm, int n_tokens) {
  if (n_tokens < 1) throw std::invalid_argument("forward_time: n_tokens must be >= 1");
  const double load = (1.0 - cm.prefetch_fraction) * cm.target_bytes / cm.bandwidth;
  const double compute = static_cast<double>(n_tokens) / cm.compute_rate;
  return cm.fixed_overhead + std::max(load, compute);
}

void AcceptanceCurve::validate() const {
  if (points.empty()) throw std::invalid_argument("acceptance curve: no points");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].budget <= points[i - 1].budget) {
      throw std::invalid_argument("acceptance curve: budgets must be strictly increasing");
    }
  }
}

AcceptancePoint AcceptanceCurve::at(double budget) const {
  validate();
  if (budget < points.front().budget || budget > points.back().budget) {
    throw std::out_of_range("acceptance curve: budget outside measured range");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].budget == budget) return points[i];
    if (i + 1 < points.size() && budget < points[i + 1].budget) {
      const auto& a = points[i];
      const auto& b = points[i + 1];
      const double w = (budget - a.budget) / static_cast<double>(b.budget - a.budget);
      return {static_cast<int>(std::lround(budget)), a.gen_rate + w * (b.gen_rate - a.gen_rate),
              a.rounds + w * (b.rounds - a.rounds)};
    }
  }
  return points.back();
}

ThroughputEstimate estimate_throughput(const CostModel& cm, const AcceptanceCurve& curve, int budget) {
  cm.validate();
  if (budget > cm.n_max) throw std::out_of_range("estimate_throughput: budget above the cost model's n_max");
  const auto point = curve.at(budget);
  ThroughputEstimate est;
  est.budget = budget;
  est.gen_rate = point.gen_rate;
  est.t_draft = point.rounds * cm.draft_step_time;
  est.t_forward = forward_time(cm, budget);
  est.tokens_per_second = est.gen_rate / (est.t_draft + est.t_forward);
  est.speedup = est.tokens_per_second * forward_time(cm, 1);
  return est;
}

BudgetChoice optimize_budget(const CostModel& cm, const AcceptanceCurve& curve) {
  curve.validate();
  if (curve.points.size() < 2) throw std::invalid_argument("optimize_budget: curve needs at least two points");
  BudgetChoice choice;
  for (const auto& p : curve.points) {
    choice.sweep.push_back(estimate_throughput(cm, curve, p.budget));
    // strict '>' keeps the smallest budget on ties
    if (choice.sweep.size() == 1 || choice.sweep.back().tokens_per_second > choice.best.tokens_per_second) {
      choice.best = choice.sweep.back();
    }
  }
  return choice;
}

}  // namespace specexec
