#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace iplforge {

// splitmix64 finalizer; good avalanche for seed derivation.
std::uint64_t mix64(std::uint64_t x);

// Derives an independent stream seed from (seed, tag, index). Generators
// keyed this way stay reproducible regardless of generation order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                          std::uint64_t index = 0);

// mt19937_64 with hand-rolled distributions. The standard pins the engine's
// output sequence but not the library distributions, and pinned test
// expectations must survive a stdlib change.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range. Bias is O(range/2^64), irrelevant at this scale.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller, one spare cached.
  double normal();

  // Index into a discrete distribution given by non-negative weights.
  std::size_t choose(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(
          uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace iplforge
