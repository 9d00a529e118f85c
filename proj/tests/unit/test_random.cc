#include <cmath>
#include <set>

#include "doctest.h"
#include "nbslu/random.h"

using nbslu::Rng;

TEST_CASE("derive_seed is a deterministic mix of seed and tag") {
  CHECK(nbslu::derive_seed(1, "a") == nbslu::derive_seed(1, "a"));
  CHECK(nbslu::derive_seed(1, "a") != nbslu::derive_seed(1, "b"));
  CHECK(nbslu::derive_seed(1, 7) != nbslu::derive_seed(2, 7));
  std::set<uint64_t> seen;
  for (uint64_t i = 0; i < 1000; ++i) seen.insert(nbslu::derive_seed(42, i));
  CHECK(seen.size() == 1000);
}

TEST_CASE("fnv1a matches published test vectors") {
  CHECK(nbslu::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(nbslu::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(nbslu::fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("uniform draws stay in [0, 1) and replay under the same seed") {
  Rng a(5), b(5);
  for (int i = 0; i < 10000; ++i) {
    const double x = a.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    CHECK(x == b.uniform());
  }
}

TEST_CASE("below covers its range without bias") {
  Rng rng(9);
  int counts[7] = {};
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
  // Binomial sd is sqrt(n p (1-p)) ~ 92; allow five of them.
  for (int c : counts) CHECK(std::abs(c - n / 7) < 460);
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.range(-2, 2);
    CHECK(v >= -2);
    CHECK(v <= 2);
  }
}

TEST_CASE("normal and truncated normal moments") {
  Rng rng(11);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);

  double t2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.truncated_normal(0.02);
    CHECK(std::abs(x) <= 0.04);
    t2 += x * x;
  }
  // Variance of a standard normal truncated at +-2 is 1 - 4 phi(2) / (2 Phi(2) - 1).
  const double phi2 = std::exp(-2.0) / std::sqrt(2.0 * M_PI);
  const double mass = std::erf(2.0 / std::sqrt(2.0));
  const double var = 0.02 * 0.02 * (1.0 - 4.0 * phi2 / mass);
  CHECK(std::abs(t2 / n - var) < 0.02 * var);
}
