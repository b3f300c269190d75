#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

namespace driftforge {

// FNV-1a 64. Doubles are hashed by their IEEE bit pattern, so hashes are
// exact value fingerprints, not textual ones.
class Fnv1a64 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    update(&bits, sizeof bits);
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t hash_doubles(std::span<const double> xs) {
  Fnv1a64 h;
  for (double x : xs) h.update(x);
  return h.digest();
}

inline std::string hash_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf, 16);
}

std::string hash_file_hex(const std::string& path);

}  // namespace driftforge
