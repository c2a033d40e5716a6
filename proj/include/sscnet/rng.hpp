#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sscnet {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Mixes a master seed with a path of stream keys (replicate, subject, ...).
/// Streams for distinct key paths are independent of evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(master, keys));
}

// Stream tags keep unrelated consumers of one master seed apart.
namespace stream {
inline constexpr std::uint64_t fmri = 0x464d5249;
inline constexpr std::uint64_t counts = 0x434f554e;
inline constexpr std::uint64_t ica = 0x49434121;
inline constexpr std::uint64_t bootstrap = 0x424f4f54;
inline constexpr std::uint64_t permutation = 0x5045524d;
inline constexpr std::uint64_t variogram = 0x56415249;
inline constexpr std::uint64_t sources = 0x53524345;
}  // namespace stream

}  // namespace sscnet
