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

// Baked model bundle.
//
// Layout (all integers little-endian):
//   8   magic "DXFBNDL1"
//   4   u32 format version
//   4   u32 section count N
//   N x 56-byte table of contents entries:
//         32  section name, zero padded
//         8   u64 absolute byte offset (16-byte aligned)
//         8   u64 byte length
//         4   u32 CRC-32 of the section bytes
//         4   reserved (0)
//   section payloads, zero padded to 16-byte alignment
//
// Sections: "manifest" (UTF-8 JSON), then per mesh layer l
// "layer.l.positions" (f32 xyz), "layer.l.triangles" (u32 triples),
// "layer.l.features" (f32, vertex-major), then per conv layer i
// "net.i.weights" (f32 [out][in][kh][kw]), "net.i.bias" (f32) and, for 2x2
// kernels, "net.i.packed" (see pack_conv_weights).

#ifndef DUPLEX_ASSETS_HPP
#define DUPLEX_ASSETS_HPP

#include "duplex/camera.hpp"
#include "duplex/render.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace duplex {

inline constexpr std::uint32_t kBundleVersion = 1;

/// Provenance and viewer hints stored next to the model.
struct BundleInfo {
  std::string scene_hash;
  std::string config_hash;
  int n_steps = 0;  // teacher quadrature steps
  std::optional<PoseBounds> pose_bounds;
  double camera_angle_x = 0.0;
  int width = 0;
  int height = 0;
};

struct Bundle {
  DuplexModel model;
  BundleInfo info;
  nlohmann::json manifest;
};

/// Rounds every stored array (positions, features, weights, biases) to f32 so a
/// bundle round trip is exact.
DuplexModel bake_to_float(const DuplexModel& model);

nlohmann::json make_manifest(const DuplexModel& model, const BundleInfo& info);

std::vector<std::uint8_t> encode_bundle(const DuplexModel& model, const BundleInfo& info);
Bundle decode_bundle(std::span<const std::uint8_t> bytes, const std::string& context = "bundle");

/// The model is baked to f32 first; the written file is what import returns.
void export_bundle(const DuplexModel& model, const BundleInfo& info, const std::filesystem::path& path);
Bundle import_bundle(const std::filesystem::path& path);

/// Texture-style block for a 2x2 layer: one 4-tap texel per (out, in) pair,
/// row-major over out then in, taps in order (0,0),(1,0),(0,1),(1,1) as
/// (dx, dy); then one bias row of ceil(out/4) texels, zero padded.
struct PackedConv {
  int out_ch = 0;
  int in_ch = 0;
  std::vector<double> texels;    // out_ch * in_ch * 4
  std::vector<double> bias_row;  // ceil(out_ch / 4) * 4

  std::size_t texel_index(int o, int i) const { return (static_cast<std::size_t>(o) * in_ch + i) * 4; }
};

PackedConv pack_conv_weights(const ConvLayer& layer);
ConvLayer unpack_conv_weights(const PackedConv& packed, Activation activation);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace duplex

#endif  // DUPLEX_ASSETS_HPP
