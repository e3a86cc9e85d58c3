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

#include "duplex/image_io.hpp"

#include "duplex/binary_io.hpp"

#include <fmt/format.h>
#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace duplex {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr char kRawMagic[] = "DXFRAW01";

}  // namespace

void write_png(const ImageF& image, const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail_data(fmt::format("cannot open '{}' for writing", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail_data("libpng initialization failed");
  }
  const int w = image.width(), h = image.height();
  std::vector<png_byte> bytes(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<png_byte>(std::lround(image.data()[i] * 255.0));
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * w * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail_data(fmt::format("failed writing PNG '{}'", path.string()));
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageF read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail_data(fmt::format("cannot open '{}'", path.string()));
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
    fail_data(fmt::format("'{}' is not a PNG file", path.string()));
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail_data("libpng initialization failed");
  }
  std::vector<png_byte> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail_data(fmt::format("corrupt PNG '{}'", path.string()));
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  bytes.resize(stride * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::vector<double> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w * 3; ++x) rgb[static_cast<std::size_t>(y) * w * 3 + x] = rows[y][x] / 255.0;
  return ImageF(w, h, std::move(rgb));
}

void write_raw(const ImageF& image, const std::filesystem::path& path) {
  ByteWriter out;
  out.raw(std::string_view(kRawMagic, 8));
  out.u32(static_cast<std::uint32_t>(image.width()));
  out.u32(static_cast<std::uint32_t>(image.height()));
  out.u32(3);
  for (double v : image.data()) out.f32(static_cast<float>(v));
  write_file(path, out.bytes());
}

ImageF read_raw(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes, path.string());
  if (in.fixed_string(8) != kRawMagic) fail_data(fmt::format("'{}' is not a raw image dump", path.string()));
  const auto w = in.u32(), h = in.u32(), c = in.u32();
  if (c != 3 || w == 0 || h == 0 || w > 65536 || h > 65536)
    fail_data(fmt::format("'{}': unsupported raw image header", path.string()));
  std::vector<double> rgb(static_cast<std::size_t>(w) * h * 3);
  for (double& v : rgb) v = in.f32();
  return ImageF(static_cast<int>(w), static_cast<int>(h), std::move(rgb));
}

}  // namespace duplex
