#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "iplforge/error.hpp"
#include "iplforge/rng.hpp"

using namespace iplforge;

TEST_CASE("derive_seed is a pure function of its inputs") {
  CHECK(derive_seed(1, "a", 0) == derive_seed(1, "a", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(2, "a", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "b", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "ab", 0) != derive_seed(1, "ba", 0));
}

TEST_CASE("uniform stays in [0,1) and respects bounds") {
  Rng rng(42);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-3.0, 2.0);
    CHECK(u >= -3.0);
    CHECK(u < 2.0);
  }
}

TEST_CASE("uniform_int covers the inclusive range") {
  Rng rng(7);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) seen.insert(rng.uniform_int(-2, 3));
  CHECK(seen == std::set<std::int64_t>{-2, -1, 0, 1, 2, 3});
  CHECK_THROWS_AS(rng.uniform_int(1, 0), ConfigError);
}

TEST_CASE("normal has the right first two moments") {
  Rng rng(123);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("choose follows the weights") {
  Rng rng(5);
  const std::vector<double> weights{1.0, 3.0, 0.0, 4.0};
  std::vector<int> hits(4, 0);
  const int n = 80000;
  for (int i = 0; i < n; ++i) hits[rng.choose(weights)] += 1;
  CHECK(hits[2] == 0);
  CHECK(std::abs(hits[0] / double(n) - 1.0 / 8.0) < 0.01);
  CHECK(std::abs(hits[1] / double(n) - 3.0 / 8.0) < 0.01);
  CHECK(std::abs(hits[3] / double(n) - 4.0 / 8.0) < 0.01);
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(rng.choose(zero), ConfigError);
}

TEST_CASE("shuffle permutes and is seed-deterministic") {
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  std::vector<int> a = v, b = v;
  Rng r1(99), r2(99), r3(100);
  r1.shuffle(a);
  r2.shuffle(b);
  CHECK(a == b);
  std::vector<int> c = v;
  r3.shuffle(c);
  CHECK(a != c);
  std::sort(a.begin(), a.end());
  CHECK(a == v);
}

TEST_CASE("identical seeds give identical streams") {
  Rng a(2024), b(2024);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
}
