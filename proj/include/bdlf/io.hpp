#pragma once

// Flat little-endian array files and small filesystem helpers.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdlf::io {

namespace fs = std::filesystem;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
template <class V>
V to_little(V v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(V)];
    std::memcpy(bytes, &v, sizeof(V));
    std::reverse(bytes, bytes + sizeof(V));
    std::memcpy(&v, bytes, sizeof(V));
  }
  return v;
}
}  // namespace detail

template <class V>
void write_le(std::ostream& os, std::span<const V> values) {
  static_assert(std::is_arithmetic_v<V>);
  for (V v : values) {
    V le = detail::to_little(v);
    os.write(reinterpret_cast<const char*>(&le), sizeof(V));
  }
  if (!os) throw std::runtime_error("write failed");
}

template <class V>
std::vector<V> read_le(std::istream& is, std::size_t count) {
  std::vector<V> out(count);
  for (auto& v : out) {
    V le;
    is.read(reinterpret_cast<char*>(&le), sizeof(V));
    if (!is) throw FormatError("unexpected end of array data");
    v = detail::to_little(le);
  }
  return out;
}

template <class V>
void write_array_file(const fs::path& path, std::span<const V> values) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_le<V>(os, values);
}

/// Reads exactly `count` values; a size mismatch with the file is a format error.
template <class V>
std::vector<V> read_array_file(const fs::path& path, std::size_t count) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  const auto bytes = fs::file_size(path);
  if (bytes != count * sizeof(V)) {
    throw FormatError(path.string() + ": expected " + std::to_string(count * sizeof(V)) +
                      " bytes, found " + std::to_string(bytes));
  }
  return read_le<V>(is, count);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << text;
}

}  // namespace bdlf::io
