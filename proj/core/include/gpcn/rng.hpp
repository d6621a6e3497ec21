// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>

#include "gpcn/tensor.hpp"

namespace gpcn {

/// xoshiro256** seeded through splitmix64. Satisfies UniformRandomBitGenerator
/// so it plugs into <random> distributions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, no cached spare so the stream is stateless per call).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t s_[4];
};

/// Mixes a base seed with a stream index; used for per-sample and per-run seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

namespace init {

/// Uniform(-b, b) with b = sqrt(6 / fan_in), marked as a trainable leaf.
Tensor kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng);
/// N(mean, stddev^2) trainable leaf.
Tensor normal(Shape shape, double mean, double stddev, Rng& rng);
Tensor uniform(Shape shape, double lo, double hi, Rng& rng);
Tensor constant(Shape shape, double value);

}  // namespace init

}  // namespace gpcn
