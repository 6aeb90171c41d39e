#include "dseg/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dseg {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::uint64_t index) {
  std::uint64_t state = root ^ fnv1a(stage);
  std::uint64_t a = splitmix64(state);
  state ^= index * 0x9e3779b97f4a7c15ull;
  std::uint64_t b = splitmix64(state);
  return a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
}

double hash_unit(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t state = seed ^ (counter * 0xd1342543de82ef95ull);
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

double hash_gaussian(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t state = seed ^ (counter * 0xd1342543de82ef95ull);
  std::uint64_t r1 = splitmix64(state);
  std::uint64_t r2 = splitmix64(state);
  double u1 = static_cast<double>((r1 >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  double u2 = static_cast<double>(r2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("next_below: n must be positive");
  std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
  std::uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return x % n;
}

double Rng::next_gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
  double u2 = next_double();
  double mag = std::sqrt(-2.0 * std::log(u1));
  double ang = 2.0 * std::numbers::pi * u2;
  spare_ = mag * std::sin(ang);
  have_spare_ = true;
  return mag * std::cos(ang);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

int thread_budget() {
  if (const char* env = std::getenv("DSEG_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<int>(v > 64 ? 64 : v);
    return 1;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw > 64 ? 64 : hw);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int workers = thread_budget();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (static_cast<std::size_t>(workers) > n) workers = static_cast<int>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int t = 0; t < workers; ++t) {
    std::size_t begin = n * t / workers;
    std::size_t end = n * (t + 1) / workers;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dseg
