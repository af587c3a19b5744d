#pragma once

// Little-endian binary IO helpers shared by the dataset, checkpoint, and
// stream-frame codecs. Values are assembled byte-by-byte so the on-disk and
// on-wire formats do not depend on host endianness.

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace bci::binio {

inline void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<uint8_t>& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

// Cursor over a byte buffer; returns false on underrun instead of throwing so
// stream parsers can wait for more bytes.
struct Reader {
  const uint8_t* data = nullptr;
  size_t size = 0;
  size_t pos = 0;

  size_t remaining() const { return size - pos; }

  bool get_u8(uint8_t& v) {
    if (remaining() < 1) return false;
    v = data[pos++];
    return true;
  }
  bool get_u16(uint16_t& v) {
    if (remaining() < 2) return false;
    v = static_cast<uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return true;
  }
  bool get_u32(uint32_t& v) {
    if (remaining() < 4) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return true;
  }
  bool get_u64(uint64_t& v) {
    if (remaining() < 8) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return true;
  }
  bool get_f32(float& v) {
    uint32_t bits;
    if (!get_u32(bits)) return false;
    std::memcpy(&v, &bits, 4);
    return true;
  }
};

}  // namespace bci::binio
