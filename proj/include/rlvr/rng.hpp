#pragma once

// Counter-derived random streams. Every consumer seeds its own engine from
// (root seed, stream tag, step, index) so runs are reproducible regardless of
// evaluation order, and checkpoints never need to serialize engine state.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>

namespace rlvr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stream tags, one per independent randomness consumer.
namespace stream {
inline constexpr std::uint64_t kQueries = 0x51;
inline constexpr std::uint64_t kRollouts = 0x52;
inline constexpr std::uint64_t kShuffle = 0x53;
inline constexpr std::uint64_t kEval = 0x54;
inline constexpr std::uint64_t kInstance = 0x55;
}  // namespace stream

inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(root ^ 0x6c62272e07bb0142ull);
  for (std::uint64_t p : parts) h = splitmix64(h ^ (p + 0x9e3779b97f4a7c15ull));
  return h;
}

// mt19937_64 raw output is pinned by the standard; the std:: distributions are
// not, so all shaping (uniform, ints, categorical, normal) is done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // inclusive range, rejection sampled so every value is equally likely
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo);
    if (span == UINT64_MAX) return static_cast<std::int64_t>(next_u64());
    const std::uint64_t bound = span + 1;
    const std::uint64_t reject_below = (0 - bound) % bound;  // 2^64 mod bound
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x < reject_below);
    return lo + static_cast<std::int64_t>(x % bound);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // CDF walk; probs must be nonnegative and sum to ~1. The final bucket
  // absorbs rounding slack so a valid index always comes back.
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: empty distribution");
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rlvr
