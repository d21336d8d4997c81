#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace kspace {

// Seeded generator shared by every stochastic step (sampling, projections,
// t-SNE initialization, permutations, synthetic data).
//
// Engine: std::mt19937_64 seeded with the 64-bit seed value. The standard
// fixes its output sequence bit-for-bit. The derived draws below are
// implemented here rather than via <random> distributions, whose algorithms
// are implementation-defined:
//   uniform()        (next >> 11) * 2^-53, in [0, 1)
//   uniform_index(n) Lemire's multiply-shift with rejection, unbiased in [0, n)
//   normal()         Box-Muller, one output per pair of uniforms, no caching
// Changing any of these changes every seeded output; bump format versions if so.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle driven by uniform_index, last element first.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// `count` distinct indices from [0, n), uniform without replacement, sorted
/// ascending. Partial Fisher-Yates over the identity permutation.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count,
                                                    std::uint64_t seed);

}  // namespace kspace
