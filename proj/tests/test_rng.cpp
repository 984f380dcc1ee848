#include <doctest.h>

#include <set>

#include "mbgnn/rng.hpp"

using namespace mbgnn;

TEST_SUITE("rng") {

TEST_CASE("stream draws are a pure function of (key, counter)") {
  RngStream a({1, 2, 3});
  RngStream b({1, 2, 3});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(a.at(5) == RngStream({1, 2, 3}).at(5));
}

TEST_CASE("different key tuples decorrelate") {
  CHECK(rng_key({1, 2, 3}) != rng_key({1, 3, 2}));
  CHECK(rng_key({1, 2}) != rng_key({1, 2, 0}));
  std::set<std::uint64_t> seen;
  for (std::uint64_t v = 0; v < 1000; ++v) seen.insert(rng_key({42, v}));
  CHECK(seen.size() == 1000);
}

TEST_CASE("next_unit stays in [0,1) and looks uniform") {
  RngStream rng({7});
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("shuffle is deterministic per key and a permutation") {
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto a = v, b = v;
  shuffle_with_key(a, rng_key({9, 9}));
  shuffle_with_key(b, rng_key({9, 9}));
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == v);
  auto c = v;
  shuffle_with_key(c, rng_key({9, 10}));
  CHECK(c != a);
}

}  // TEST_SUITE
