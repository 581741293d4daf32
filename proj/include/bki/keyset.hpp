#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bki/config.hpp"

namespace bki {

/// Binary keyset file: 8-byte little-endian count, then count 8-byte
/// little-endian keys. Keys need not be sorted on disk.

class KeysetFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void write_u64_le(std::uint64_t v, unsigned char* p) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

}  // namespace detail

inline void save_keyset(const std::vector<Key>& keys, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw KeysetFormatError("cannot open for writing: " + path);
  unsigned char buf[8];
  detail::write_u64_le(keys.size(), buf);
  out.write(reinterpret_cast<const char*>(buf), 8);
  for (Key k : keys) {
    detail::write_u64_le(k, buf);
    out.write(reinterpret_cast<const char*>(buf), 8);
  }
  if (!out) throw KeysetFormatError("write failed: " + path);
}

inline std::vector<Key> load_keyset(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw KeysetFormatError("cannot open: " + path);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  if (file_size < 8) throw KeysetFormatError("truncated header: " + path);
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  const std::uint64_t count = detail::read_u64_le(buf);
  if (file_size != 8 + 8 * count)
    throw KeysetFormatError("body length does not match count: " + path);
  std::vector<Key> keys(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf), 8);
    keys[i] = detail::read_u64_le(buf);
  }
  if (!in) throw KeysetFormatError("read failed: " + path);
  return keys;
}

}  // namespace bki
