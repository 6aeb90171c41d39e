#include <doctest.h>

#include "dseg/core.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <cstdlib>
#include <set>
#include <string>
#include <vector>

using namespace dseg;

TEST_CASE("splitmix64 matches the reference sequence") {
  // Reference values for the published algorithm, state starting at 0.
  std::uint64_t state = 0;
  CHECK(splitmix64(state) == 0xe220a8397b1dcdafull);
  CHECK(splitmix64(state) == 0x6e789e6aa1b965f4ull);
  CHECK(splitmix64(state) == 0x06c45d188009454full);
}

TEST_CASE("derive_seed separates stages and indices") {
  std::uint64_t a = derive_seed(7, "frame", 0);
  CHECK(a == derive_seed(7, "frame", 0));
  CHECK(a != derive_seed(7, "frame", 1));
  CHECK(a != derive_seed(7, "cluster", 0));
  CHECK(a != derive_seed(8, "frame", 0));

  // No collisions over a small grid of roots/stages/indices.
  std::set<std::uint64_t> seen;
  for (std::uint64_t root : {0ull, 1ull, 11ull}) {
    for (const char* stage : {"frame", "cluster", "teacher", "student", "scene", "noise"}) {
      for (std::uint64_t i = 0; i < 50; ++i) {
        seen.insert(derive_seed(root, stage, i));
      }
    }
  }
  CHECK(seen.size() == 3u * 6u * 50u);
}

TEST_CASE("hash_unit is deterministic and in [0,1)") {
  for (std::uint64_t c = 0; c < 1000; ++c) {
    double v = hash_unit(42, c);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(v == hash_unit(42, c));
  }
  CHECK(hash_unit(42, 1) != hash_unit(42, 2));
  CHECK(hash_unit(42, 1) != hash_unit(43, 1));
}

TEST_CASE("hash_gaussian moments are approximately standard normal") {
  const int n = 20000;
  double sum = 0, sum2 = 0;
  for (int c = 0; c < n; ++c) {
    double g = hash_gaussian(9, static_cast<std::uint64_t>(c));
    CHECK(g == hash_gaussian(9, static_cast<std::uint64_t>(c)));
    sum += g;
    sum2 += g * g;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("Rng draws respect bounds and are seed-reproducible") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    double d = r.next_double();
    CHECK(d >= 0.0);
    CHECK(d < 1.0);
    std::uint64_t v = r.next_below(7);
    CHECK(v < 7);
  }
  CHECK(r.next_below(1) == 0);
  CHECK_THROWS_AS(r.next_below(0), std::invalid_argument);
}

TEST_CASE("Rng::shuffle permutes deterministically") {
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> w = v;
  Rng a(99), b(99);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}

TEST_CASE("Rng gaussian moments") {
  Rng r(77);
  const int n = 20000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double g = r.next_gaussian();
    sum += g;
    sum2 += g * g;
  }
  double mean = sum / n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(sum2 / n - mean * mean - 1.0) < 0.05);
}

TEST_CASE("format_double round-trips exactly") {
  const double cases[] = {0.0,     -0.0,   1.0,        -1.0,     0.1,
                          1.0 / 3, 2e-4,   1e-300,     -1e300,   3.141592653589793,
                          1e17,    123456, 6.02214076e23, 5e-324};
  for (double v : cases) {
    std::string s = format_double(v);
    double back = std::strtod(s.c_str(), nullptr);
    CHECK(back == v);
    CHECK(std::signbit(back) == std::signbit(v));
    // Typed readers must not mistake the value for an integer.
    CHECK(s.find_first_of(".eE") != std::string::npos);
  }
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(HUGE_VAL) == "inf");
  CHECK(format_double(-HUGE_VAL) == "-inf");
}

TEST_CASE("thread_budget honors DSEG_THREADS with clamping") {
  {
    EnvGuard env("DSEG_THREADS", "3");
    CHECK(thread_budget() == 3);
  }
  {
    EnvGuard env("DSEG_THREADS", "1");
    CHECK(thread_budget() == 1);
  }
  {
    EnvGuard env("DSEG_THREADS", "999");
    CHECK(thread_budget() == 64);
  }
  {
    EnvGuard env("DSEG_THREADS", "0");
    CHECK(thread_budget() == 1);
  }
  {
    EnvGuard env("DSEG_THREADS", nullptr);
    CHECK(thread_budget() >= 1);
  }
}

TEST_CASE("parallel_for covers every index exactly once") {
  for (const char* threads : {"1", "8"}) {
    EnvGuard env("DSEG_THREADS", threads);
    const std::size_t n = 1000;
    std::vector<int> hits(n, 0);
    parallel_for(n, [&](std::size_t i) { hits[i] += 1; });
    for (std::size_t i = 0; i < n; ++i) CHECK(hits[i] == 1);
  }
}

TEST_CASE("parallel_for propagates worker exceptions") {
  EnvGuard env("DSEG_THREADS", "4");
  CHECK_THROWS_AS(
      parallel_for(100, [](std::size_t i) {
        if (i == 57) throw std::runtime_error("boom");
      }),
      std::runtime_error);
}

TEST_CASE("parallel_for handles empty and single ranges") {
  int calls = 0;
  parallel_for(0, [&](std::size_t) { ++calls; });
  CHECK(calls == 0);
  parallel_for(1, [&](std::size_t i) { calls += static_cast<int>(i) + 1; });
  CHECK(calls == 1);
}
