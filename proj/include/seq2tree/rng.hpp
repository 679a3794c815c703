#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace seq2tree {

inline uint64_t fnv1a64(std::string_view text, uint64_t h = 0xcbf29ce484222325ull) {
  for (char c : text) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Deterministic RNG. All randomness in the project flows from a single
/// seed; independent consumers get their own substream via `fork`, so
/// adding a consumer never perturbs the draws of another.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1). Derived from the raw stream directly so the value
  /// sequence is identical across standard libraries.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  int uniform_int(int n) {
    return static_cast<int>(static_cast<uint64_t>(uniform() * static_cast<double>(n))) % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
    return perm;
  }

  /// Independent substream named by `label`; depends only on the original
  /// seed and the label, not on how much of this stream was consumed.
  Rng fork(std::string_view label) const {
    uint64_t h = fnv1a64(label);
    h ^= seed_ + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return Rng(h);
  }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace seq2tree
