#pragma once

#include <cstdint>

#include "specexec/distribution.hpp"
#include "specexec/rng.hpp"

namespace specexec {

struct SamplingConfig {
  double temperature = 1.0;  // 0 means greedy
  double top_p = 1.0;        // 1 disables nucleus filtering
  std::uint64_t seed = 0;
  int max_new_tokens = 1;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;

  bool is_identity() const { return temperature == 1.0 && top_p >= 1.0; }
};

/// Temperature scaling on logits, then nucleus truncation, then
/// renormalization. Ties in argmax and in the nucleus sort go to the lowest
/// token id.
Distribution apply_warp(const Distribution& dist, const SamplingConfig& cfg);

/// Inverse-CDF over ascending token ids for a given uniform draw in [0, 1).
TokenId sample(const Distribution& dist, double u);

/// Consumes exactly one draw from `rng`.
TokenId sample(const Distribution& dist, Rng& rng);

}  // namespace specexec
