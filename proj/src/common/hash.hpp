#pragma once

#include <cstdint>
#include <string_view>

namespace ehrgen {

// FNV-1a, used for vocabulary and artifact fingerprints.
constexpr uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ehrgen
