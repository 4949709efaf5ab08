#include "specexec/rng.hpp"

namespace specexec {

namespace {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t stream_id(std::string_view stream) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed, std::string_view stream)
    : seed_(seed), stream_(stream), key_(mix64(mix64(seed + 0x9e3779b97f4a7c15ULL) ^ stream_id(stream))) {}

std::uint64_t Rng::raw_at(std::uint64_t counter) const {
  return mix64(key_ ^ mix64(counter * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

double Rng::uniform_at(std::uint64_t counter) const {
  return static_cast<double>(raw_at(counter) >> 11) * 0x1.0p-53;
}

double Rng::uniform() { return uniform_at(counter_++); }

}  // namespace specexec
