#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace dermpipe {

// xoshiro256** seeded through splitmix64. All sampling helpers below are
// implemented here rather than through <random> distributions so that every
// seeded artifact is identical across standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()();

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform();
  // Uniform integer in [0, bound), unbiased. bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller (no cached second value).
  double normal();

  // Derive an independent stream, e.g. one per fold or per epoch.
  Rng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace dermpipe
