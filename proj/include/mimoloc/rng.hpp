#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mimo {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream derivation: the seed of a substream is a hash chain
/// of the master seed and each key in order, so any (trial, path, ...) tuple
/// maps to the same generator regardless of execution order.
inline Rng make_stream(std::uint64_t master,
                       std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t k : keys) {
    h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  }
  return Rng(h);
}

/// Stream tags keep independent uses of the same trial index apart.
enum StreamTag : std::uint64_t {
  kNoiseStream = 1,
  kPhaseStream = 2,
  kCalibrationStream = 3,
  kSceneStream = 4,
};

} // namespace mimo
