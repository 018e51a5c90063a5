#include "celif/rng.hpp"

#include <cmath>
#include <numbers>

#include "celif/error.hpp"

namespace celif {

namespace {

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) {
    x += 0x9E3779B97F4A7C15ULL;
    word = splitmix64(x);
  }
}

Rng Rng::derive(std::string_view purpose, std::uint64_t index) const {
  const std::uint64_t base = splitmix64(seed_ ^ fnv1a64(purpose));
  return Rng(splitmix64(base + index * 0x9E3779B97F4A7C15ULL));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = -n % n;  // 2^64 mod n
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x < limit);
  return x % n;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(phi);
  has_cached_ = true;
  return r * std::cos(phi);
}

Tensor gaussian_fill(Rng& rng, Real mean, Real stddev, Shape shape) {
  if (!(stddev >= 0)) throw ConfigError("gaussian_fill: stddev must be >= 0");
  Tensor out(std::move(shape));
  for (auto& x : out.data()) x = mean + stddev * rng.normal();
  return out;
}

Tensor uniform_fill(Rng& rng, Real lo, Real hi, Shape shape) {
  Tensor out(std::move(shape));
  for (auto& x : out.data()) x = rng.uniform(lo, hi);
  return out;
}

}  // namespace celif
