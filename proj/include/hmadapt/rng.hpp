#pragma once

#include <cstdint>
#include <random>

namespace hmadapt {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded random stream with self-contained distributions. The engine
// (mt19937_64) is fully specified by the standard, and the distributions are
// implemented here rather than via std::*_distribution, whose output is
// implementation-defined. Same seed, same call sequence -> same numbers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform01();
  double uniform(double lo, double hi);

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller (pairs cached).
  double normal();
  double normal(double mean, double sigma);

  // Independent stream derived from this stream's seed and a key. Children
  // with distinct keys do not overlap regardless of how much the parent has
  // been consumed.
  Rng child(std::uint64_t key) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hmadapt
