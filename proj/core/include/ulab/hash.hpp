#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace ulab {

// FNV-1a 64. Content hashes for run manifests; not cryptographic.
class Fnv64 {
 public:
  void update(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001B3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  uint64_t digest() const { return state_; }

  std::string hex() const {
    static const char* k = "0123456789abcdef";
    std::string out(16, '0');
    uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<size_t>(i)] = k[v & 0xF];
      v >>= 4;
    }
    return out;
  }

 private:
  uint64_t state_ = 0xCBF29CE484222325ULL;
};

inline uint64_t fnv64(std::string_view s) {
  Fnv64 h;
  h.update(s);
  return h.digest();
}

}  // namespace ulab
