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

// 8-bit PNG and raw float dumps.

#ifndef DUPLEX_IMAGE_IO_HPP
#define DUPLEX_IMAGE_IO_HPP

#include "duplex/metrics.hpp"

#include <filesystem>

namespace duplex {

/// Quantizes with round(255 v).
void write_png(const ImageF& image, const std::filesystem::path& path);
/// Reads 8-bit or 16-bit gray/RGB/RGBA PNGs; alpha is dropped.
ImageF read_png(const std::filesystem::path& path);

/// Raw dump: 8-byte magic "DXFRAW01", u32 width, u32 height, u32 channels (3),
/// then little-endian f32 values, row-major, channel-fastest.
void write_raw(const ImageF& image, const std::filesystem::path& path);
ImageF read_raw(const std::filesystem::path& path);

}  // namespace duplex

#endif  // DUPLEX_IMAGE_IO_HPP
