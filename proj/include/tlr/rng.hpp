#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace tlr {

/// SplitMix64 step. Used to derive independent child seeds from one root
/// seed: child i of root r is the (i+1)-th output of a SplitMix64 stream
/// started at state r.
std::uint64_t splitmix64(std::uint64_t& state);

/// Seed of the `index`-th child stream of `root` (0-based).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// First `count` child seeds of `root`, in order.
std::vector<std::uint64_t> derive_seeds(std::uint64_t root, std::size_t count);

/// Deterministic random source. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; the distributions are implemented here
/// so results are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_below(std::uint64_t bound);

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform01();

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// `k` distinct values from [0, n), sorted ascending (Floyd's algorithm).
  std::vector<std::uint64_t> sample_distinct(std::uint64_t n, std::uint64_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace tlr
