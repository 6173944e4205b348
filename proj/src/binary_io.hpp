#pragma once

// Little-endian fixed-width binary encoding shared by the cache and
// checkpoint formats.

#include "gcnnlp/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

namespace gcnnlp::binary {

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) throw ParseError(std::string("truncated data while reading ") + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline void put_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), magic.size()); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), magic.size()) || got != magic) {
    throw ParseError("bad magic: expected " + std::string(magic));
  }
}

inline void put_string(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), s.size());
}

inline std::string get_string(std::istream& in, const char* what) {
  const auto n = get<std::uint32_t>(in, what);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw ParseError(std::string("truncated data while reading ") + what);
  return s;
}

}  // namespace gcnnlp::binary
