#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace spheresfm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed for the k-th independent stream derived from a user seed.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t k) {
  return splitmix64(seed ^ splitmix64(k + 1));
}

// Unbiased integer in [0, n) by rejection; portable across standard libraries.
inline std::size_t uniform_index(std::mt19937_64& gen, std::size_t n) {
  const std::uint64_t bound = std::uint64_t(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r = gen();
  while (r >= limit) r = gen();
  return std::size_t(r % bound);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(std::mt19937_64& gen) {
  return double(gen() >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace spheresfm
