#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>

namespace i2m2 {

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Counter-based pseudo-random stream: an incrementing counter pushed through
// the SplitMix64 finalizer. The draw sequence is a pure function of the seed,
// identical across platforms and compilers.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), counter_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    std::uint64_t z = (counter_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; always consumes exactly two uniforms.
  double normal() {
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586 * u2);
  }

  // Index draw from a probability vector (entries sum to 1).
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: empty support");
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  // Child stream derived from the original seed and a salt; independent of
  // how many draws the parent has made.
  RngStream fork(std::uint64_t salt) const {
    std::uint64_t z = seed_ ^ (salt + 0x9e3779b97f4a7c15ull + (seed_ << 6) + (seed_ >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return RngStream(z ^ (z >> 31));
  }

  RngStream fork(std::string_view tag) const { return fork(fnv1a64(tag)); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace i2m2
