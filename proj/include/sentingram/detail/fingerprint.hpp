#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace sentingram::detail {

// Streaming 64-bit FNV-1a. Stable across platforms, unlike std::hash.
class Fingerprint {
 public:
  Fingerprint& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    // Field separator so ("ab","c") and ("a","bc") differ.
    state_ ^= 0xff;
    state_ *= 0x100000001b3ULL;
    return *this;
  }

  Fingerprint& update(std::uint64_t value) { return update(std::to_string(value)); }

  std::uint64_t value() const { return state_; }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace sentingram::detail
