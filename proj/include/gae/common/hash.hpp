#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace gae {

/// 64-bit FNV-1a. Used for token buckets, id hashes and RNG stream seeds,
/// so the value must never change between releases.
constexpr std::uint64_t fnv1a64(std::string_view text,
                                std::uint64_t basis = 0xcbf29ce484222325ULL) {
  std::uint64_t h = basis;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// splitmix64 finalizer; decorrelates nearby seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream keyed by (seed, name).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  return mix64(fnv1a64(name, mix64(seed)));
}

/// Lower-case hex SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const unsigned char> bytes);

}  // namespace gae
