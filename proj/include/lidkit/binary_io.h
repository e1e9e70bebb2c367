// Copyright 2026  The lidkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef LIDKIT_BINARY_IO_H_
#define LIDKIT_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "lidkit/common.h"

namespace lidkit::io {

// All multi-byte values are little-endian on disk. The build only targets
// little-endian hosts, so values are written as-is.
static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void WritePod(std::ostream &os, const T &v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <typename T>
T ReadPod(std::istream &is) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  is.read(reinterpret_cast<char *>(&v), sizeof(T));
  if (!is) throw DataError("unexpected end of binary file");
  return v;
}

inline void WriteString(std::ostream &os, const std::string &s) {
  WritePod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string ReadString(std::istream &is, uint32_t max_len = 1u << 20) {
  auto n = ReadPod<uint32_t>(is);
  if (n > max_len) throw DataError("corrupt string length in binary file");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw DataError("unexpected end of binary file");
  return s;
}

template <typename T>
void WriteArray(std::ostream &os, const T *data, size_t n) {
  os.write(reinterpret_cast<const char *>(data), static_cast<std::streamsize>(n * sizeof(T)));
}

template <typename T>
void ReadArray(std::istream &is, T *data, size_t n) {
  is.read(reinterpret_cast<char *>(data), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw DataError("unexpected end of binary file");
}

inline void ExpectMagic(std::istream &is, const char (&magic)[9], const std::string &what) {
  char buf[8];
  is.read(buf, 8);
  if (!is || std::memcmp(buf, magic, 8) != 0)
    throw DataError(what + ": bad magic (not a lidkit file of this type)");
}

}  // namespace lidkit::io

#endif  // LIDKIT_BINARY_IO_H_
