#include <doctest.h>

#include <set>

#include "veil/rng.hpp"

using veil::Rng;

TEST_CASE("equal seeds produce equal streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("unequal seeds diverge within the first 16 draws") {
  Rng a(1), b(2);
  bool differ = false;
  for (int i = 0; i < 16 && !differ; ++i) differ = a.next_u64() != b.next_u64();
  CHECK(differ);
}

TEST_CASE("uniform stays in [0, 1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("bounded draws cover the range without bias artifacts") {
  Rng rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t v = rng.bounded(10);
    CHECK(v < 10);
    seen.insert(v);
  }
  CHECK(seen.size() == 10);
  CHECK_THROWS_AS(rng.bounded(0), veil::ConfigError);
}

TEST_CASE("normal draws have sane moments") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.05);
  CHECK(std::fabs(var - 1.0) < 0.1);
}
