#pragma once

#include <cstdint>
#include <initializer_list>

namespace zoneprior {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Order-sensitive seed derivation: fold each part through mix64.
/// derive_seed({base, i}) gives per-item seeds that do not depend on
/// the order in which items are produced.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x5A6F6E6550726F72ull;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

}  // namespace zoneprior
