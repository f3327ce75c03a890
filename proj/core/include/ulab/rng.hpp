#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace ulab {

inline constexpr uint64_t kGolden64 = 0x9E3779B97F4A7C15ULL;

// splitmix64 output function. Every stochastic choice in the library goes
// through this mixer so results are identical across platforms and stdlibs.
constexpr uint64_t mix64(uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

// Derives the seed of sub-stream `stream` from a parent seed. This is the
// fixed mixing function referenced throughout: shard s trains from
// derive_seed(train_seed, s), slice step r from derive_seed(shard_seed, r),
// the epoch-e shuffle from derive_seed(step_seed, e), and so on.
constexpr uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return mix64(seed + kGolden64 * (stream + 1));
}

// Deterministic splitmix64 generator. Intentionally not std::mt19937 +
// std::*_distribution: those are stdlib-specific, and retraining equality
// tests compare parameters bit-for-bit.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += kGolden64;
    return mix64(state_);
  }

  // [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // [0, n) by 128-bit multiply; bias is < 2^-64 * n, irrelevant here.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller, one spare cached.
  double normal();

  // Fisher-Yates. Used instead of std::shuffle for the same portability
  // reason as above.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = unit();
  while (u1 <= 0.0) u1 = unit();
  const double u2 = unit();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 6.283185307179586476925286766559 * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

}  // namespace ulab
