#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace specexec {

/// Counter-based generator: the n-th draw on (seed, stream) is a pure
/// function of the triple, so two consumers that take draws in the same order
/// see the same numbers no matter what else they computed in between.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream);

  /// Uniform double in [0, 1) at the current counter; advances the counter.
  double uniform();

  /// Uniform double at an arbitrary counter value; does not advance.
  double uniform_at(std::uint64_t counter) const;

  std::uint64_t raw_at(std::uint64_t counter) const;

  std::uint64_t seed() const { return seed_; }
  const std::string& stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::string stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t stream_id(std::string_view stream);

}  // namespace specexec
