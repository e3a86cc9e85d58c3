// Copyright 2026 The duplexrf Authors. All Rights Reserved.
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

// Little-endian byte buffers shared by the grid, checkpoint and bundle formats.

#ifndef DUPLEX_BINARY_IO_HPP
#define DUPLEX_BINARY_IO_HPP

#include "duplex/types.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace duplex {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void raw(std::span<const std::uint8_t> s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  /// Writes `s` into exactly `width` bytes, zero padded.
  void fixed_string(std::string_view s, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) u8(i < s.size() ? static_cast<std::uint8_t>(s[i]) : 0);
  }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  void f64_array(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t>& bytes() { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  template <typename U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string fixed_string(std::size_t width) {
    auto s = take(width);
    std::string out(reinterpret_cast<const char*>(s.data()), width);
    out.erase(out.find_last_not_of('\0') + 1);
    return out;
  }
  std::string string() {
    const auto n = u32();
    auto s = take(n);
    return {reinterpret_cast<const char*>(s.data()), n};
  }
  std::vector<double> f64_array() {
    const auto n = u64();
    if (n > remaining() / 8) fail_data(context_ + ": truncated array");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) fail_data(context_ + ": truncated data");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  template <typename U>
  U get_le() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(s[i]) << (8 * i);
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string context_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace duplex

#endif  // DUPLEX_BINARY_IO_HPP
