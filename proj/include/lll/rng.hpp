#pragma once

// Seeded random streams. Every stochastic purpose (placement, budgets,
// traffic, back-off, ...) draws from its own stream so that changing one
// knob does not shift the draws of another.

#include <cstdint>
#include <random>

namespace lll {

/// splitmix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
  Placement = 1,
  Budget = 2,
  TrafficClass = 3,
  Traffic = 4,
  Backoff = 5,
  DownlinkLoss = 6,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Stream `purpose` (optionally per node `index`) of master seed `seed`.
  static Rng derive(std::uint64_t seed, Stream purpose, std::uint64_t index = 0) {
    return Rng(mix64(mix64(seed ^ mix64(static_cast<std::uint64_t>(purpose))) + index));
  }

  /// Uniform in [0, 1) with 53 random bits. Implemented by hand so results
  /// do not depend on the standard library's distribution code.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lll
