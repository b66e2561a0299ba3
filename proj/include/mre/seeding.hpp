#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mre {

/// Engine seeded from several 64-bit words; std::seed_seq only consumes the
/// low 32 bits of each entry, so every word is split in two.
inline std::mt19937_64 seeded_rng(std::initializer_list<std::uint64_t> words) {
  std::vector<std::uint32_t> parts;
  parts.reserve(2 * words.size());
  for (std::uint64_t w : words) {
    parts.push_back(static_cast<std::uint32_t>(w));
    parts.push_back(static_cast<std::uint32_t>(w >> 32));
  }
  std::seed_seq seq(parts.begin(), parts.end());
  return std::mt19937_64(seq);
}

}  // namespace mre
