#pragma once

#include <cstddef>
#include <cstdint>

namespace mvred {

// CRC-64/XZ (reflected, poly 0xC96C5795D7870F42). Guards the bundle
// container against truncation and bit flips; not a cryptographic digest.
class Crc64 {
 public:
  void update(const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t crc = ~value_;
    for (std::size_t i = 0; i < len; ++i)
      crc = table()[(crc ^ bytes[i]) & 0xff] ^ (crc >> 8);
    value_ = ~crc;
  }

  std::uint64_t value() const { return value_; }

 private:
  static const std::uint64_t* table();
  std::uint64_t value_ = 0;
};

inline std::uint64_t crc64(const void* data, std::size_t len) {
  Crc64 crc;
  crc.update(data, len);
  return crc.value();
}

}  // namespace mvred
