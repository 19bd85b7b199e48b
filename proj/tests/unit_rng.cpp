#include <doctest.h>

#include <cmath>
#include <vector>

#include "hmadapt/rng.hpp"

using hmadapt::Rng;

TEST_CASE("same seed reproduces the stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += (a.next_u64() == b.next_u64());
  CHECK(same == 0);
}

TEST_CASE("uniform01 stays in [0,1) and fills the range") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform respects bounds") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(-30.0, 30.0);
    CHECK(v >= -30.0);
    CHECK(v < 30.0);
  }
}

TEST_CASE("uniform_int covers [0,n) roughly uniformly") {
  Rng rng(11);
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[rng.uniform_int(10)];
  for (int c : counts) {
    CHECK(c > draws / 10 - 600);
    CHECK(c < draws / 10 + 600);
  }
}

TEST_CASE("normal has the requested moments") {
  Rng rng(5);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal(0.0, 20.0);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double std = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.3);
  CHECK(std::abs(std - 20.0) < 0.3);
}

TEST_CASE("child streams are independent of parent consumption") {
  Rng a(9);
  Rng child_before = a.child(1);
  for (int i = 0; i < 50; ++i) a.next_u64();
  Rng child_after = a.child(1);
  for (int i = 0; i < 100; ++i) CHECK(child_before.next_u64() == child_after.next_u64());
}

TEST_CASE("children with distinct keys differ") {
  Rng a(9);
  Rng c1 = a.child(1), c2 = a.child(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += (c1.next_u64() == c2.next_u64());
  CHECK(same == 0);
}
