#include "tlr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "tlr/error.hpp"

namespace tlr {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t state = root + index * 0x9E3779B97F4A7C15ULL;
  return splitmix64(state);
}

std::vector<std::uint64_t> derive_seeds(std::uint64_t root, std::size_t count) {
  std::vector<std::uint64_t> out;
  out.reserve(count);
  std::uint64_t state = root;
  for (std::size_t i = 0; i < count; ++i) out.push_back(splitmix64(state));
  return out;
}

std::uint64_t Rng::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw ValidationError("uniform_below: bound must be positive");
  // Values below 2^64 mod bound are rejected so every residue is equally likely.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t x = engine_();
    if (x >= threshold) return x % bound;
  }
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::uint64_t> Rng::sample_distinct(std::uint64_t n, std::uint64_t k) {
  if (k > n) throw ValidationError("sample_distinct: k exceeds population");
  std::set<std::uint64_t> chosen;
  for (std::uint64_t j = n - k; j < n; ++j) {
    std::uint64_t t = uniform_below(j + 1);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  return {chosen.begin(), chosen.end()};
}

}  // namespace tlr
