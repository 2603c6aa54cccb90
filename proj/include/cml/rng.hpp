#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cml {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream purposes, so different consumers of one seed never collide.
enum class Stream : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kTrainChain = 3,
  kEvalChain = 4,
  kClassMean = 5,
  kClassSamples = 6,
  kSplit = 7,
  kCorruption = 8,
  kGradCheck = 9,
};

// Derives an independent stream from a base seed, a purpose and a tuple of
// counters (e.g. {epoch, sample}). The result depends only on the values, so
// serial and parallel code that key by the same tuple see the same numbers.
inline Rng derive_rng(std::uint64_t seed, Stream purpose, std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(purpose)));
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

}  // namespace cml
