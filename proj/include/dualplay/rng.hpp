#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dualplay {

/// Seeded generator with platform-independent derived draws.
///
/// std::uniform_*_distribution output differs between standard libraries, so
/// every draw used by the engine goes through the helpers below, which only
/// rely on the raw mt19937_64 stream (fully specified by the standard).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Uniform double in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  double normal(double mean, double stddev);

  /// Independent child generator for a named stream.
  Rng fork(std::uint64_t stream) const;

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

 private:
  Rng() = default;
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dualplay
