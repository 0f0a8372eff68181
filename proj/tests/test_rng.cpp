#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "sadcbo/rng.hpp"

using sadcbo::Rng;
using sadcbo::derive_seed;
using sadcbo::splitmix64;

TEST_CASE("splitmix64 matches the reference output stream") {
  std::uint64_t state = 0;
  CHECK(splitmix64(state) == 0xe220a8397b1dcdafull);
  CHECK(splitmix64(state) == 0x6e789e6aa1b965f4ull);
  CHECK(splitmix64(state) == 0x06c45d188009454full);
}

TEST_CASE("derive_seed separates streams and is order sensitive") {
  const std::uint64_t a = derive_seed(42, {1, 2});
  const std::uint64_t b = derive_seed(42, {2, 1});
  const std::uint64_t c = derive_seed(42, {1, 2});
  const std::uint64_t d = derive_seed(43, {1, 2});
  CHECK(a == c);
  CHECK(a != b);
  CHECK(a != d);
  CHECK(derive_seed(42, {}) != derive_seed(42, {0}));
}

TEST_CASE("uniform stays in [0,1) with the right mean") {
  Rng rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 3.0 / std::sqrt(12.0 * n));
}

TEST_CASE("identical seeds give identical streams, different seeds differ") {
  Rng a(123), b(123), c(124);
  bool any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
    any_diff = any_diff || (va != c.next_u64());
  }
  CHECK(any_diff);
}

TEST_CASE("normal has standard moments") {
  Rng rng(11);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform_int is unbiased over small ranges") {
  Rng rng(5);
  const std::uint64_t n_bins = 7;
  std::vector<int> counts(n_bins, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t v = rng.uniform_int(n_bins);
    REQUIRE(v < n_bins);
    ++counts[v];
  }
  for (int c : counts) {
    CHECK(std::abs(c - n / static_cast<int>(n_bins)) < 400);
  }
}

TEST_CASE("beta22 matches the Beta(2,2) cdf and moments") {
  Rng rng(3);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  int below_quarter = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.beta22();
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
    sum += x;
    sum_sq += x * x;
    if (x <= 0.25) ++below_quarter;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.003);
  CHECK(std::abs(var - 0.05) < 0.002);
  // P(X <= 1/4) = 3x^2 - 2x^3 at 1/4 = 0.15625
  CHECK(std::abs(below_quarter / static_cast<double>(n) - 0.15625) < 0.005);
}

TEST_CASE("beta_half matches the arcsine cdf and moments") {
  Rng rng(9);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  int below_quarter = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.beta_half();
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
    sum += x;
    sum_sq += x * x;
    if (x <= 0.25) ++below_quarter;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.004);
  CHECK(std::abs(var - 0.125) < 0.003);
  // P(X <= 1/4) = (2/pi) asin(1/2) = 1/3
  CHECK(std::abs(below_quarter / static_cast<double>(n) - 1.0 / 3.0) < 0.006);
}

TEST_CASE("beta_half concentrates less mass near the center than uniform") {
  Rng rng(17);
  const int n = 50000;
  int near_center_arcsine = 0, near_center_uniform = 0;
  for (int i = 0; i < n; ++i) {
    if (std::abs(rng.beta_half() - 0.5) < 0.1) ++near_center_arcsine;
    if (std::abs(rng.uniform() - 0.5) < 0.1) ++near_center_uniform;
  }
  CHECK(near_center_arcsine < near_center_uniform);
}
