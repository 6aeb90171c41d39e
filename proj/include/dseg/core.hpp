#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

namespace dseg {

// Label grids are row-major in meaning (row = image/beam row) but stored in
// Eigen's default column-major layout; all serialization goes through io.cpp
// which fixes the on-disk order.
using GridD = Eigen::ArrayXXd;
using GridI = Eigen::ArrayXXi;
using GridB = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Reserved label values, shared by in-memory grids and the 16-bit PGM files.
inline constexpr int kIgnore = 65535;
inline constexpr int kGround = 65534;
inline constexpr int kMaxSegmentId = 65533;

std::uint64_t splitmix64(std::uint64_t& state);

// Derives a stage-specific seed from the root seed so that stages draw from
// disjoint streams no matter how many draws earlier stages consumed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::uint64_t index = 0);

// Stateless unit-interval and gaussian draws keyed by (seed, counter); used
// where consumption order must not depend on loop scheduling.
double hash_unit(std::uint64_t seed, std::uint64_t counter);
double hash_gaussian(std::uint64_t seed, std::uint64_t counter);

// mt19937_64 is fully specified by the standard, so sequences are portable.
// std::uniform_* distributions are not; the mappings here are our own.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1), 53-bit resolution
  double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // unbiased integer in [0, n)
  std::uint64_t next_below(std::uint64_t n);

  double next_gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Shortest decimal string that parses back to exactly the same double.
// Always carries a '.', an exponent, or inf/nan so readers keep the type.
std::string format_double(double v);

// Worker count: DSEG_THREADS if set (clamped to [1, 64]), else hardware
// concurrency. Results never depend on this value, only wall time does.
int thread_budget();

// Runs fn(i) for i in [0, n). fn must touch only state owned by index i;
// under that contract the result is identical for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dseg
