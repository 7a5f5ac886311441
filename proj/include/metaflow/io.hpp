#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <type_traits>
#include <vector>

// Little-endian binary helpers shared by the checkpoint and shard formats.
namespace metaflow::io {

template <class U>
U to_le(U v) {
  static_assert(std::is_unsigned_v<U>);
  if constexpr (std::endian::native == std::endian::little || sizeof(U) == 1) {
    return v;
  } else {
    U r = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) r |= ((v >> (8 * i)) & 0xFF) << (8 * (sizeof(U) - 1 - i));
    return r;
  }
}

inline void write_bytes(std::ostream& out, const char* data, std::size_t n) {
  out.write(data, static_cast<std::streamsize>(n));
}

inline bool read_bytes(std::istream& in, char* data, std::size_t n) {
  in.read(data, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount()) == n;
}

template <class U>
void write_le(std::ostream& out, U v) {
  v = to_le(v);
  write_bytes(out, reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
bool read_le(std::istream& in, U& v) {
  if (!read_bytes(in, reinterpret_cast<char*>(&v), sizeof(U))) return false;
  v = to_le(v);
  return true;
}

template <class U>
void write_le_array(std::ostream& out, std::span<const U> values) {
  if constexpr (std::endian::native == std::endian::little) {
    write_bytes(out, reinterpret_cast<const char*>(values.data()), values.size_bytes());
  } else {
    for (U v : values) write_le(out, v);
  }
}

template <class U>
bool read_le_array(std::istream& in, std::span<U> values) {
  if (!read_bytes(in, reinterpret_cast<char*>(values.data()), values.size_bytes())) return false;
  if constexpr (std::endian::native != std::endian::little)
    for (auto& v : values) v = to_le(v);
  return true;
}

inline void write_f32_array(std::ostream& out, std::span<const float> values) {
  std::vector<std::uint32_t> bits(values.size());
  std::memcpy(bits.data(), values.data(), values.size_bytes());
  write_le_array<std::uint32_t>(out, bits);
}

inline bool read_f32_array(std::istream& in, std::span<float> values) {
  std::vector<std::uint32_t> bits(values.size());
  if (!read_le_array<std::uint32_t>(in, bits)) return false;
  std::memcpy(values.data(), bits.data(), values.size_bytes());
  return true;
}

}  // namespace metaflow::io
