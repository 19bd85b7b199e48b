#include "hmadapt/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hmadapt {

namespace {

std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t s = seed;
  return splitmix64(s);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(mix_seed(seed)) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform01() {
  // 53 random bits -> [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be > 0");
  // Rejection sampling over a multiple of n keeps the draw unbiased.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  have_spare_ = true;
  return radius * std::cos(angle);
}

double Rng::normal(double mean, double sigma) { return mean + sigma * normal(); }

Rng Rng::child(std::uint64_t key) const {
  std::uint64_t s = seed_;
  splitmix64(s);  // decorrelate from the parent's own engine seed
  s ^= key * 0x9e3779b97f4a7c15ULL;
  return Rng(splitmix64(s));
}

}  // namespace hmadapt
