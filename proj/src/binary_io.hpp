// Copyright 2026 The NoiseFlow-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian primitive encoding shared by the NFPATCH1 and NFLOW1 formats.

#ifndef NOISEFLOW_SRC_BINARY_IO_HPP_
#define NOISEFLOW_SRC_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "noiseflow/error.hpp"

namespace nflow::detail {

class ByteWriter {
 public:
  template <typename U>
  void put_uint(U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
  }
  void u8(std::uint8_t v) { put_uint(v); }
  void u16(std::uint16_t v) { put_uint(v); }
  void u32(std::uint32_t v) { put_uint(v); }
  void u64(std::uint64_t v) { put_uint(v); }
  void f32(float v) { put_uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_uint(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<char>& bytes() const { return bytes_; }
  void reserve(std::size_t n) { bytes_.reserve(n); }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  template <typename U>
  U get_uint() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::uint8_t u8() { return get_uint<std::uint8_t>(); }
  std::uint16_t u16() { return get_uint<std::uint16_t>(); }
  std::uint32_t u32() { return get_uint<std::uint32_t>(); }
  std::uint64_t u64() { return get_uint<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_uint<std::uint64_t>()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }
  void need(std::size_t n) const {
    if (n > remaining()) {
      throw FormatError(context_ + ": truncated file (needed " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ")");
    }
  }

 private:
  const std::vector<char>& bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace nflow::detail

#endif  // NOISEFLOW_SRC_BINARY_IO_HPP_
