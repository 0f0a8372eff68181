#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace sadcbo {

// splitmix64 step: advances the state and returns the next output.
// Used both for seeding and for deriving independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Folds a sequence of integer tags into a base seed so that distinct tag
// sequences give statistically independent seeds.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t state = base;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t tag : tags) {
    state ^= tag;
    out = splitmix64(state);
  }
  return out;
}

// xoshiro256++ generator with Box-Muller normals and the two Beta shapes the
// benchmark context distributions need. Deliberately self-contained so that
// streams are reproducible across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in {0, ..., n-1}, rejection-sampled to avoid modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v < threshold);
    return v % n;
  }

  // Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * pi() * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Beta(2, 2) on [0, 1]: the median of three independent uniforms.
  double beta22() {
    double a = uniform(), b = uniform(), c = uniform();
    const double lo = std::fmin(a, std::fmin(b, c));
    const double hi = std::fmax(a, std::fmax(b, c));
    return a + b + c - lo - hi;
  }

  // Beta(1/2, 1/2) (arcsine law) on [0, 1] by inverse-CDF: sin^2(pi*u/2).
  double beta_half() {
    const double s = std::sin(0.5 * pi() * uniform());
    return s * s;
  }

 private:
  static constexpr double pi() { return 3.14159265358979323846; }
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4] = {};
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sadcbo
