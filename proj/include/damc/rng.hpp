#pragma once

// Seed derivation. Every random stream in the library is an std::mt19937_64
// seeded from (base seed, stream name[, index]) through SplitMix64, so adding
// a stream or changing a draw count never shifts another stream.

#include <cstdint>
#include <random>
#include <string_view>

namespace damc {

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) {
  return splitmix64(splitmix64(base) ^ fnv1a(stream));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view stream, std::uint64_t index) {
  return splitmix64(derive_seed(base, stream) + splitmix64(index));
}

inline Engine make_engine(std::uint64_t base, std::string_view stream) {
  return Engine(derive_seed(base, stream));
}

}  // namespace damc
