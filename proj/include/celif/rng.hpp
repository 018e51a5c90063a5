#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "celif/tensor.hpp"

namespace celif {

/// xoshiro256** generator seeded through splitmix64.
///
/// Sub-streams: derive(purpose, index) builds a fresh generator whose seed is
///   splitmix64(splitmix64(root ^ fnv1a64(purpose)) + index * 0x9E3779B97F4A7C15)
/// and depends only on the root seed, never on how far this stream has
/// advanced. The library uses the purposes "weights", "encoding", "data",
/// "eval", "shuffle", "probe" and "permutation".
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  Rng derive(std::string_view purpose, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer on [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via the Box-Muller transform; the paired sample is cached.
  double normal();

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  double cached_normal_ = 0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

Tensor gaussian_fill(Rng& rng, Real mean, Real stddev, Shape shape);
Tensor uniform_fill(Rng& rng, Real lo, Real hi, Shape shape);

}  // namespace celif
