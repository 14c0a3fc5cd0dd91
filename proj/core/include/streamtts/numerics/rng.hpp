#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace streamtts::num {

/// SplitMix64 mix of (seed, stream); used to derive independent seeds for
/// per-step and per-candidate random streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded random source. Uniform and normal draws are computed from the raw
/// engine output so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Standard normal via Box-Muller; consumes two engine draws.
  double normal();
  std::vector<double> normal_vector(std::size_t n);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace streamtts::num
