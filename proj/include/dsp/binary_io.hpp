#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "dsp/error.hpp"

namespace dsp::bin {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool try_get(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<std::size_t>(is.gcount()) == sizeof(T);
}

template <class T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!try_get(is, v)) throw DataError("truncated input while reading " + what);
  return v;
}

inline void put_magic(std::ostream& os, const char (&m)[5]) { os.write(m, 4); }

inline void expect_magic(std::istream& is, const char (&m)[5], const std::string& path) {
  char buf[4] = {0, 0, 0, 0};
  is.read(buf, 4);
  if (is.gcount() != 4 || std::memcmp(buf, m, 4) != 0)
    throw DataError(path + ": bad magic, expected " + std::string(m, 4));
}

}  // namespace dsp::bin
