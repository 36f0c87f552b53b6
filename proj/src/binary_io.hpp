#pragma once

// Little-endian primitives shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "ccpt/error.hpp"

namespace ccpt::detail {

template <class U>
void write_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U read_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw Error(ErrorKind::Corruption, std::string("truncated while reading ") + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline void write_f32(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
inline void write_f64(std::ostream& os, double v) { write_le(os, std::bit_cast<std::uint64_t>(v)); }
inline float read_f32(std::istream& is, const char* what) { return std::bit_cast<float>(read_le<std::uint32_t>(is, what)); }
inline double read_f64(std::istream& is, const char* what) { return std::bit_cast<double>(read_le<std::uint64_t>(is, what)); }

}  // namespace ccpt::detail
