#pragma once

#include <cstdint>

namespace lbn {

/// Deterministic pseudo-random stream: xoshiro256++ seeded through
/// splitmix64, with Box-Muller for normals. The generator choice is
/// frozen so a (seed, stream) pair reproduces the same draws bit for
/// bit across runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal. Pairs of draws share one Box-Muller transform;
  /// the spare value is cached, so the stream stays deterministic.
  double normal();
  double normal(double mean, double stddev);

  /// Returns exactly 1.0 with probability `rate`, else exactly 0.0.
  /// rate must lie in [0, 1].
  double bernoulli(double rate);

  /// Uniform integer in [0, n), n >= 1.
  std::uint64_t next_below(std::uint64_t n);

  /// Independent child stream derived from (creation seed, stream id).
  /// Splitting is stateless: it does not consume from this stream.
  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lbn
