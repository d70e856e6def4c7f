// Copyright 2026 The taskaug Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "taskaug/error.hpp"

namespace taskaug::binio {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

/// Reads little-endian values and reports the byte offset of truncation.
class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  template <class T>
  T get(const char* what) {
    T v{};
    bytes(&v, sizeof(T), what);
    return v;
  }

  void bytes(void* dst, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
      throw DataError(std::string("truncated file at byte offset ") +
                      std::to_string(offset_ + got) + " while reading " + what);
    }
    offset_ += n;
  }

  std::uint64_t offset() const { return offset_; }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
  std::uint64_t offset_ = 0;
};

}  // namespace taskaug::binio
