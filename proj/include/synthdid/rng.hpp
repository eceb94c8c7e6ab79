#pragma once

#include <cstdint>
#include <random>

namespace synthdid {

/// One SplitMix64 step; also used to scramble seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Independent random stream for replicate `index` under `seed`. Streams are a
/// pure function of (seed, index), so work can be handed to any thread in any
/// order without changing the draws.
class Stream {
public:
  Stream(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound); bound > 0. Unbiased (rejection).
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  bool bernoulli(double p) { return uniform() < p; }

private:
  std::mt19937_64 engine_;
};

}  // namespace synthdid
