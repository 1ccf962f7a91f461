#ifndef GRAPENER_HASH_HPP
#define GRAPENER_HASH_HPP

#include <cstdint>
#include <string>
#include <string_view>

namespace grapener {

// FNV-1a, 64 bit. Used for content hashes in manifests and for mixing
// corpus names into sampling seeds; not cryptographic.
inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(uint64_t h);
uint64_t hash_file(const std::string& path);  // throws Error if unreadable

}  // namespace grapener

#endif
