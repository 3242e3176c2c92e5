#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace rfsl {

// splitmix64: cheap stateless mixer used to derive independent substream
// seeds (per frame, per cell, per coordinate) from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a) {
  return splitmix64(seed ^ splitmix64(a));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  return mix_seed(mix_seed(seed, a, b), c);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(splitmix64(seed)); }

inline void fill_gaussian(std::span<double> out, std::mt19937_64& rng, double stddev,
                          double mean = 0.0) {
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : out) v = dist(rng);
}

}  // namespace rfsl
