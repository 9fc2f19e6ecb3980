#include "cmail/rng.hpp"

#include <cmath>

#include "cmail/errors.hpp"

namespace cmail {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

static uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t master, std::string_view stage) {
  return splitmix64(fnv1a64(stage) ^ master);
}

Rng::Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
  // 53 high bits -> double in [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mu, double sigma) {
  if (has_spare_) {
    has_spare_ = false;
    return mu + sigma * spare_;
  }
  // Box-Muller on the portable uniform stream; 1-u keeps log() away from 0.
  const double two_pi = 6.283185307179586476925286766559;
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(two_pi * u2);
  has_spare_ = true;
  return mu + sigma * r * std::cos(two_pi * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw ValidationError("uniform_int: n must be positive, got " + std::to_string(n));
  // Rejection sampling keeps the draw unbiased and the stream portable.
  uint64_t bound = ~uint64_t{0} - (~uint64_t{0} % static_cast<uint64_t>(n));
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= bound);
  return static_cast<int>(x % static_cast<uint64_t>(n));
}

}  // namespace cmail
