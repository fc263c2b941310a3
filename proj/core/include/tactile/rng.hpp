#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tactile {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a tuple of tags
/// (stage, epoch, sample ordinal, ...). Order of execution never matters.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

// Stream tags.
enum : std::uint64_t {
  kStreamInit = 1,
  kStreamSynth = 2,
  kStreamBalance = 3,
  kStreamMask = 4,
  kStreamPairs = 5,
  kStreamDropout = 6,
  kStreamShuffle = 7,
  kStreamSubset = 8,
};

}  // namespace tactile
