// Small shared utilities: deterministic RNG, locale-independent number
// formatting, FNV hashing, string helpers.
#pragma once

#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace enseval {

inline constexpr std::string_view kVersion = "0.1.0";

// 64-bit FNV-1a over raw bytes. Stable across platforms; used for mock/cache
// keys and config hashes, never for security.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

// Locale-independent formatting/parsing (std::to_chars / from_chars).
std::string format_double(double v);            // shortest round-trip form
std::string format_fixed(double v, int digits); // fixed number of decimals
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// 0.48849 -> "48.8" (half-up at the given number of decimals).
std::string format_percent(double fraction, int decimals = 1);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with(std::string_view s, std::string_view prefix);

// Deterministic RNG. mt19937_64 output is fully specified by the standard;
// draws below avoid std::*_distribution, whose mapping is
// implementation-defined, so streams replay identically everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n); n must be > 0.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  int int_range(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(index(static_cast<std::size_t>(hi - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Counting semaphore with a runtime limit; bounds in-flight network calls.
class Semaphore {
 public:
  explicit Semaphore(int limit) : count_(limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return count_ > 0; });
    --count_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int count_;
};

struct SemaphoreGuard {
  explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;
  Semaphore& sem;
};

}  // namespace enseval
