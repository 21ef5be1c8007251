#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace mlctx {

// Stream derivation so that every consumer of randomness (init, dropout, augmentation,
// shuffling) is a pure function of the run seed and its own coordinates.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t s = splitmix64(seed);
  for (auto p : parts) s = splitmix64(s ^ splitmix64(p));
  return s;
}

}  // namespace mlctx
