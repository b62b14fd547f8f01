#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hinite {

using Rng = std::mt19937_64;

namespace detail {

// FNV-1a; std::hash is not stable across implementations, this is.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

// Independent, reproducible stream per (base seed, purpose tag).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return detail::splitmix64(base ^ detail::splitmix64(detail::fnv1a(tag)));
}

inline Rng make_rng(std::uint64_t base, std::string_view tag) {
  return Rng(derive_seed(base, tag));
}

}  // namespace hinite
