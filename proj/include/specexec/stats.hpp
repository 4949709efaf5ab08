#pragma once

#include <cstdint>
#include <functional>
#include <span>

namespace specexec {

struct ConfidenceInterval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

double mean_of(std::span<const double> values);

/// Percentile bootstrap of the mean, seeded through the "bootstrap" stream.
ConfidenceInterval bootstrap_mean_ci(std::span<const double> values, std::uint64_t seed, int resamples = 1000,
                                     double level = 0.95);

/// Runs fn(0..n-1) on up to `workers` threads. Callers write results into
/// index-addressed slots, so output order never depends on scheduling.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace specexec
