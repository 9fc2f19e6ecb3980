#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cmail {

uint64_t fnv1a64(std::string_view s);

// Deterministic sub-seed derivation: splitmix64(fnv1a64(stage) ^ master).
// Every pipeline stage draws its stream from (master seed, stage label) so
// stages are independently re-runnable with identical results.
uint64_t mix_seed(uint64_t master, std::string_view stage);

// Seeded random stream. All floating-point draws are built from raw 64-bit
// mt19937_64 output (not std:: distributions) so sequences are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  double normal(double mu = 0.0, double sigma = 1.0);
  int uniform_int(int n);                    // [0, n)

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  // Independent stream keyed by this rng's seed and a label.
  Rng fork(std::string_view label) const { return Rng(mix_seed(seed_, label)); }

  uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 gen_;
  uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cmail
