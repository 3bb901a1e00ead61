#pragma once

// Little-endian primitives for the binary containers (checkpoints, embeddings).

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "mgnm/errors.hpp"

namespace mgnm::binary {

template <typename U>
void put_uint(std::ostream& out, U v) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_uint(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
    throw ParseError(std::string("truncated file while reading ") + what);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

inline void put_f32(std::ostream& out, double v) {
  put_uint<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}
inline double get_f32(std::istream& in, const char* what) {
  return static_cast<double>(std::bit_cast<float>(get_uint<std::uint32_t>(in, what)));
}
inline void put_f64(std::ostream& out, double v) { put_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get_uint<std::uint64_t>(in, what));
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string get_string(std::istream& in, const char* what) {
  const auto n = get_uint<std::uint32_t>(in, what);
  if (n > (1u << 20)) throw ParseError(std::string("implausible string length in ") + what);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw ParseError(std::string("truncated file while reading ") + what);
  return s;
}

inline void put_magic(std::ostream& out, const char (&magic)[9]) { out.write(magic, 8); }
inline void expect_magic(std::istream& in, const char (&magic)[9], const char* what) {
  char buf[8];
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0) {
    throw ParseError(std::string("not a ") + what + " file (bad magic)");
  }
}

}  // namespace mgnm::binary
