#pragma once

#include <cstdint>
#include <random>

namespace driftforge {

using Rng = std::mt19937_64;

// splitmix64 finalizer, used to spread seed/stream ids into independent seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic derived stream: identical (seed, ids) give identical
// generators, different ids give independent ones.
inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0,
                    std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(seed);
  s = mix64(s ^ mix64(a + 0x9e3779b97f4a7c15ULL));
  s = mix64(s ^ mix64(b + 0x3c6ef372fe94f82aULL));
  s = mix64(s ^ mix64(c + 0x78dde6e5fd29f05dULL));
  return Rng(s);
}

// Stream ids, one per consumer, so reruns of one stage never perturb another.
namespace streams {
inline constexpr std::uint64_t dataset = 1;
inline constexpr std::uint64_t net_init = 2;
inline constexpr std::uint64_t train = 3;
inline constexpr std::uint64_t eval = 4;
inline constexpr std::uint64_t quantizer = 5;
}  // namespace streams

}  // namespace driftforge
