#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "sempt/hashing.hpp"

namespace sempt {

// SplitMix64 generator. Hand-rolled (no std::*_distribution) so that streams
// are bit-reproducible across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Lemire-style multiply-shift; bias is < n / 2^64.
  int64_t uniform_int(int64_t n) {
    auto wide = static_cast<unsigned __int128>(next_u64());
    return static_cast<int64_t>((wide * static_cast<uint64_t>(n)) >> 64);
  }

  // Standard normal via Box-Muller. Draws two uniforms per call; no cached
  // spare, so the draw count per call is fixed.
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  template <typename T>
  void fill_normal(std::vector<T>& out, double stddev) {
    for (auto& v : out) v = static_cast<T>(normal() * stddev);
  }

  template <typename T>
  void fill_uniform(std::vector<T>& out, double lo, double hi) {
    for (auto& v : out) v = static_cast<T>(lo + (hi - lo) * uniform());
  }

  template <typename Seq>
  void shuffle(Seq& seq) {
    for (int64_t i = static_cast<int64_t>(seq.size()) - 1; i > 0; --i) {
      const int64_t j = uniform_int(i + 1);
      std::swap(seq[static_cast<size_t>(i)], seq[static_cast<size_t>(j)]);
    }
  }

 private:
  uint64_t state_;
};

// Independent stream derived from a base seed and a role tag. Adding draws in
// one component never shifts another component's stream.
inline Rng derive_rng(uint64_t seed, std::string_view tag, uint64_t index = 0) {
  uint64_t h = fnv1a64(tag);
  h = fnv1a64(&index, sizeof(index), h);
  h = fnv1a64(&seed, sizeof(seed), h);
  return Rng(h);
}

}  // namespace sempt
