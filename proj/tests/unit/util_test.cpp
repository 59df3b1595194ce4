#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <thread>
#include <vector>

#include "enseval/util.hpp"

using namespace enseval;

TEST_SUITE("util") {

TEST_CASE("fnv1a64 matches published vectors") {
  // Offset basis and the classic single-byte / short-string references.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(fnv1a64("a") != fnv1a64("b"));
}

TEST_CASE("hex64 is fixed-width lowercase") {
  CHECK(hex64(0) == "0000000000000000");
  CHECK(hex64(0xdeadbeefULL) == "00000000deadbeef");
  CHECK(hex64(0xffffffffffffffffULL) == "ffffffffffffffff");
}

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, -2.5, 1e-300, 123456.789, 0.0, 1.0}) {
    auto parsed = parse_double(format_double(v));
    REQUIRE(parsed.has_value());
    CHECK(*parsed == v);
  }
}

TEST_CASE("format_fixed pins decimals") {
  CHECK(format_fixed(1.0, 2) == "1.00");
  CHECK(format_fixed(0.3, 2) == "0.30");
  CHECK(format_fixed(2.0, 0) == "2");
  CHECK(format_fixed(-1.5, 1) == "-1.5");
}

TEST_CASE("parse_double and parse_int reject trailing junk") {
  CHECK(parse_double("1.5") == 1.5);
  CHECK_FALSE(parse_double("1.5x").has_value());
  CHECK_FALSE(parse_double("").has_value());
  CHECK(parse_int("-42") == -42);
  CHECK_FALSE(parse_int("42.0").has_value());
  CHECK_FALSE(parse_int("").has_value());
}

TEST_CASE("format_percent rounds half up at the asked precision") {
  CHECK(format_percent(0.5) == "50.0");
  CHECK(format_percent(0.735) == "73.5");
  CHECK(format_percent(0.62, 0) == "62");
  CHECK(format_percent(1.0) == "100.0");
  CHECK(format_percent(0.0049, 1) == "0.5");  // 0.49% -> half-up at one decimal
}

TEST_CASE("trim, split, starts_with") {
  CHECK(trim("  x y\t\n") == "x y");
  CHECK(trim("") == "");
  CHECK(trim("   ") == "");
  CHECK(split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(split("", ',') == std::vector<std::string>{""});
  CHECK(starts_with("abcdef", "abc"));
  CHECK_FALSE(starts_with("ab", "abc"));
}

TEST_CASE("rng streams are deterministic per seed") {
  Rng a(42);
  Rng b(42);
  Rng c(43);
  bool all_equal = true;
  bool any_diff = false;
  for (int i = 0; i < 64; ++i) {
    auto va = a.next_u64();
    if (va != b.next_u64()) all_equal = false;
    if (va != c.next_u64()) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("rng uniform stays in [0,1) and bernoulli honors the extremes") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 200; ++i) {
    CHECK_FALSE(rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
  }
}

TEST_CASE("rng int_range is inclusive and covers both ends") {
  Rng rng(11);
  std::set<int> seen;
  for (int i = 0; i < 500; ++i) {
    int v = rng.int_range(2, 5);
    CHECK(v >= 2);
    CHECK(v <= 5);
    seen.insert(v);
  }
  CHECK(seen == std::set<int>{2, 3, 4, 5});
  CHECK(rng.int_range(3, 3) == 3);
}

TEST_CASE("rng shuffle permutes deterministically") {
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> w = v;
  Rng a(5);
  Rng b(5);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}

TEST_CASE("semaphore bounds concurrency") {
  Semaphore sem(2);
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < 6; ++t) {
    pool.emplace_back([&] {
      for (int i = 0; i < 20; ++i) {
        SemaphoreGuard guard(sem);
        int now = active.fetch_add(1) + 1;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::yield();
        active.fetch_sub(1);
      }
    });
  }
  for (auto& t : pool) t.join();
  CHECK(peak.load() <= 2);
  CHECK(peak.load() >= 1);
}

}  // TEST_SUITE
