#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace localsgd {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent substream `stream` of master seed `seed`. Worker k of a run uses
// substream k; other consumers use disjoint tags (see stream tags below).
inline Rng substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(seed) >> 32),
                    static_cast<std::uint32_t>(splitmix64(seed)),
                    static_cast<std::uint32_t>(splitmix64(stream ^ 0xA5A5A5A5ULL)),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

inline Rng worker_stream(std::uint64_t seed, std::size_t worker) {
  return substream(seed, worker);
}

// Seed of the r-th independent replicate derived from a base seed.
inline std::uint64_t replicate_seed(std::uint64_t base, std::uint64_t r) {
  return splitmix64(base ^ splitmix64(r + 0x51ED270B27AE4C5DULL));
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Tags for non-worker substreams, kept far from worker ids.
inline constexpr std::uint64_t kDelayStreamTag = 1ULL << 40;
inline constexpr std::uint64_t kEstimateStreamTag = 1ULL << 41;

}  // namespace localsgd
