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

// Screen-space convolutional shading network with hand-written backward pass.

#ifndef DUPLEX_SHADING_HPP
#define DUPLEX_SHADING_HPP

#include "duplex/raster.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace duplex {

/// Height x width x channels, channel-fastest.
struct Tensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  double* pixel(int y, int x) { return data.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
  const double* pixel(int y, int x) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }
  double& at(int y, int x, int c) { return pixel(y, x)[c]; }
  double at(int y, int x, int c) const { return pixel(y, x)[c]; }
};

/// [v, sin(v), cos(v), sin(2v), cos(2v), ..., sin(2^(L-1) v), cos(2^(L-1) v)].
std::vector<double> positional_encode(const Vec3& v, int levels);
void positional_encode(const Vec3& v, int levels, double* out);
constexpr int encoded_size(int levels) { return 3 + 6 * levels; }

struct ChannelGroup {
  std::string name;
  int offset;
  int count;
};

/// Channel order: features per layer (outer first), one hit mask per layer,
/// encoded view direction, then (optionally) encoded hit position per layer.
struct InputLayout {
  int layer_count = 2;
  int feature_dim = 8;
  int pe_view_levels = 5;
  int pe_pos_levels = 0;
  bool use_positions = false;
  Aabb position_bounds = Aabb::cube(1.0);  // mapped to [-1, 1]^3 before encoding

  int feature_offset(int layer) const { return layer * feature_dim; }
  int mask_offset() const { return layer_count * feature_dim; }
  int view_offset() const { return mask_offset() + layer_count; }
  int position_offset(int layer) const { return view_offset() + encoded_size(pe_view_levels) + layer * encoded_size(pe_pos_levels); }
  int channels() const {
    return view_offset() + encoded_size(pe_view_levels) + (use_positions ? layer_count * encoded_size(pe_pos_levels) : 0);
  }
  std::vector<ChannelGroup> groups() const;
  void validate() const;
};

Tensor assemble_input(const GBuffer& gbuf, const InputLayout& layout);

enum class Activation { kNone, kRelu, kSigmoid };
std::string activation_name(Activation a);
Activation activation_from_name(std::string_view name);

struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  int kh = 1;
  int kw = 1;
  Activation activation = Activation::kNone;
  std::vector<double> weights;  // [out][in][kh][kw]
  std::vector<double> bias;     // [out]

  ConvLayer() = default;
  ConvLayer(int in, int out, int kernel, Activation act);

  std::size_t weight_index(int o, int i, int dy, int dx) const {
    return ((static_cast<std::size_t>(o) * in_ch + i) * kh + dy) * kw + dx;
  }
  double& w(int o, int i, int dy, int dx) { return weights[weight_index(o, i, dy, dx)]; }
  double w(int o, int i, int dy, int dx) const { return weights[weight_index(o, i, dy, dx)]; }
  void validate() const;
};

/// Stride 1, output pixel (x, y) reads inputs (x + dx, y + dy) for
/// 0 <= dx < kw, 0 <= dy < kh, zero beyond the image.
Tensor conv_forward(const Tensor& input, const ConvLayer& layer);

struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Backward through one layer given the layer output and dLoss/dOutput.
/// Parameter gradients are accumulated into `grad`. Returns dLoss/dInput for
/// channels [0, input_channels); pass a negative count for all of them.
Tensor conv_backward(const Tensor& input, const Tensor& output, const Tensor& d_output, const ConvLayer& layer,
                     LayerGradient& grad, int input_channels = -1);

struct ShadingNet {
  std::string preset;
  InputLayout layout;
  std::vector<ConvLayer> layers;

  int footprint() const;  // total receptive-field growth in pixels, sum of (k - 1)
  void validate() const;
  std::size_t parameter_count() const;
};

struct ForwardCache {
  std::vector<Tensor> activations;  // activations[0] is the input, back() the RGB output
};

/// Returns the H x W x 3 image in (0,1). Fills `cache` for the backward pass when given.
Tensor net_forward(const ShadingNet& net, const Tensor& input, ForwardCache* cache = nullptr);

struct NetGradient {
  std::vector<LayerGradient> layers;

  static NetGradient zeros_like(const ShadingNet& net);
  void clear();
};

/// Accumulates parameter gradients into `grad` and returns dLoss/dInput for the
/// first `input_channels` channels (all when negative).
Tensor net_backward(const ShadingNet& net, const ForwardCache& cache, const Tensor& d_output, NetGradient& grad,
                    int input_channels = -1);

struct LayerSpec {
  int out_ch;
  int kernel;
  Activation activation;
};

struct NetArchitecture {
  std::string preset;
  int feature_dim;
  int pe_view_levels;
  int pe_pos_levels;
  bool use_positions;
  std::vector<LayerSpec> layers;
};

/// `compact`: 2x2 -> 32 relu, 2x2 -> 3 sigmoid, F = 8, view levels 5.
/// `quality`: 3x3 -> 256 relu, 3x3 -> 256 relu, 1x1 -> 3 sigmoid, F = 20,
/// view and position levels 10. A positive kernel override replaces every
/// kernel size (1 gives the pixelwise variant).
NetArchitecture preset_architecture(std::string_view name, int kernel_override = 0);

InputLayout make_layout(const NetArchitecture& arch, int layer_count, const Aabb& position_bounds);

/// Weights U(-sqrt(6/fan_in), sqrt(6/fan_in)) with fan_in = kh kw in_ch, zero biases.
ShadingNet init_net(const NetArchitecture& arch, const InputLayout& layout, std::uint64_t seed);

}  // namespace duplex

#endif  // DUPLEX_SHADING_HPP
