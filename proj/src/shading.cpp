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

#include "duplex/shading.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace duplex {

namespace {

// Gradient partial sums are kept per block of rows and reduced in block order,
// so the result does not depend on how many threads ran the blocks.
constexpr int kGradientBlocks = 8;

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kNone:
      break;
  }
  return x;
}

// Derivative expressed through the activation output.
double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::kRelu:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid:
      return y * (1.0 - y);
    case Activation::kNone:
      break;
  }
  return 1.0;
}

// Weights rearranged as [tap][in][out] so the innermost loop runs over outputs.
std::vector<double> tap_major_weights(const ConvLayer& layer) {
  const int taps = layer.kh * layer.kw;
  std::vector<double> wt(static_cast<std::size_t>(taps) * layer.in_ch * layer.out_ch);
  for (int dy = 0; dy < layer.kh; ++dy)
    for (int dx = 0; dx < layer.kw; ++dx) {
      const int tap = dy * layer.kw + dx;
      for (int c = 0; c < layer.in_ch; ++c)
        for (int o = 0; o < layer.out_ch; ++o)
          wt[(static_cast<std::size_t>(tap) * layer.in_ch + c) * layer.out_ch + o] = layer.w(o, c, dy, dx);
    }
  return wt;
}

}  // namespace

void positional_encode(const Vec3& v, int levels, double* out) {
  out[0] = v.x();
  out[1] = v.y();
  out[2] = v.z();
  for (int k = 0; k < levels; ++k) {
    const double f = std::ldexp(1.0, k);
    double* s = out + 3 + 6 * k;
    for (int j = 0; j < 3; ++j) {
      s[j] = std::sin(f * v[j]);
      s[3 + j] = std::cos(f * v[j]);
    }
  }
}

std::vector<double> positional_encode(const Vec3& v, int levels) {
  if (levels < 0) fail_usage("positional_encode: negative level count");
  std::vector<double> out(encoded_size(levels));
  positional_encode(v, levels, out.data());
  return out;
}

std::vector<ChannelGroup> InputLayout::groups() const {
  std::vector<ChannelGroup> g;
  for (int l = 0; l < layer_count; ++l) g.push_back({fmt::format("features.{}", l), feature_offset(l), feature_dim});
  g.push_back({"hit_mask", mask_offset(), layer_count});
  g.push_back({"view_dir_pe", view_offset(), encoded_size(pe_view_levels)});
  if (use_positions)
    for (int l = 0; l < layer_count; ++l)
      g.push_back({fmt::format("position_pe.{}", l), position_offset(l), encoded_size(pe_pos_levels)});
  return g;
}

void InputLayout::validate() const {
  if (layer_count < 1) fail_data("input layout: layer count must be at least 1");
  if (feature_dim < 1) fail_data("input layout: feature dimension must be at least 1");
  if (pe_view_levels < 0 || pe_pos_levels < 0) fail_data("input layout: negative encoding levels");
  if (use_positions && !(position_bounds.valid() && (position_bounds.extent().array() > 0).all()))
    fail_data("input layout: position bounds must have positive extent");
}

Tensor assemble_input(const GBuffer& gbuf, const InputLayout& layout) {
  layout.validate();
  if (static_cast<int>(gbuf.layers.size()) != layout.layer_count)
    fail_usage(fmt::format("assemble_input: G-buffer has {} layers, layout expects {}", gbuf.layers.size(),
                           layout.layer_count));
  if (gbuf.feature_dim != layout.feature_dim)
    fail_usage(fmt::format("assemble_input: G-buffer feature dim {} != layout {}", gbuf.feature_dim,
                           layout.feature_dim));
  for (const auto& l : gbuf.layers)
    if (l.features.size() != gbuf.pixel_count() * gbuf.feature_dim)
      fail_usage("assemble_input: G-buffer features not gathered");

  Tensor t(gbuf.height, gbuf.width, layout.channels());
  const int f = layout.feature_dim;
  const Vec3 lo = layout.position_bounds.lo;
  const Vec3 scale = (2.0 / layout.position_bounds.extent().array()).matrix();
  const auto n = static_cast<std::ptrdiff_t>(gbuf.pixel_count());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double* px = t.data.data() + i * t.channels;
    for (int l = 0; l < layout.layer_count; ++l) {
      const auto& L = gbuf.layers[l];
      std::copy_n(L.features.data() + i * f, f, px + layout.feature_offset(l));
      px[layout.mask_offset() + l] = L.mask[i] ? 1.0 : 0.0;
    }
    positional_encode(gbuf.view_dir[i], layout.pe_view_levels, px + layout.view_offset());
    if (layout.use_positions)
      for (int l = 0; l < layout.layer_count; ++l) {
        const auto& L = gbuf.layers[l];
        if (!L.mask[i]) continue;
        const Vec3 q = (L.position[i] - lo).cwiseProduct(scale) - Vec3::Ones();
        positional_encode(q, layout.pe_pos_levels, px + layout.position_offset(l));
      }
  }
  return t;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kNone:
      break;
  }
  return "none";
}

Activation activation_from_name(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "none") return Activation::kNone;
  fail_data(fmt::format("unknown activation '{}'", name));
}

ConvLayer::ConvLayer(int in, int out, int kernel, Activation act)
    : in_ch(in),
      out_ch(out),
      kh(kernel),
      kw(kernel),
      activation(act),
      weights(static_cast<std::size_t>(out) * in * kernel * kernel, 0.0),
      bias(out, 0.0) {
  validate();
}

void ConvLayer::validate() const {
  if (in_ch < 1 || out_ch < 1) fail_data("conv layer: channel counts must be positive");
  if (kh < 1 || kh > 3 || kw < 1 || kw > 3) fail_data(fmt::format("conv layer: unsupported kernel {}x{}", kh, kw));
  if (weights.size() != static_cast<std::size_t>(out_ch) * in_ch * kh * kw) fail_data("conv layer: weight size mismatch");
  if (bias.size() != static_cast<std::size_t>(out_ch)) fail_data("conv layer: bias size mismatch");
  for (double v : weights)
    if (!std::isfinite(v)) fail_data("conv layer: non-finite weight");
  for (double v : bias)
    if (!std::isfinite(v)) fail_data("conv layer: non-finite bias");
}

namespace {

// Output channels and pixels accumulated together in registers.
constexpr int kOutputBlock = 8;
constexpr int kPixelBlock = 4;

// Pre-activations for outputs [o0, o0 + B) of pixels (y, x .. x + P - 1). For
// P > 1 the caller guarantees every horizontal tap is in range. Every pixel
// sums in the same (dy, dx, c) order, so results do not depend on position or
// tiling.
template <int P, int B>
void conv_pixel_block(const Tensor& input, const ConvLayer& layer, const std::vector<double>& wt, int y, int x, int o0,
                      Tensor& out) {
  using Block = Eigen::Array<double, B, 1>;
  const int H = input.height, W = input.width, cin = layer.in_ch, cout = layer.out_ch;
  const Block bias = Eigen::Map<const Block>(layer.bias.data() + o0);
  Block acc[P];
  for (int p = 0; p < P; ++p) acc[p] = bias;
  for (int dy = 0; dy < layer.kh && y + dy < H; ++dy)
    for (int dx = 0; dx < layer.kw && x + dx < W; ++dx) {
      const double* px = input.pixel(y + dy, x + dx);
      const double* wk = wt.data() + static_cast<std::size_t>(dy * layer.kw + dx) * cin * cout + o0;
      for (int c = 0; c < cin; ++c) {
        const Block wr = Eigen::Map<const Block>(wk + static_cast<std::size_t>(c) * cout);
        for (int p = 0; p < P; ++p) acc[p] += px[static_cast<std::size_t>(p) * cin + c] * wr;
      }
    }
  for (int p = 0; p < P; ++p) Eigen::Map<Block>(out.pixel(y, x + p) + o0) = acc[p];
}

template <int P>
void conv_pixels(const Tensor& input, const ConvLayer& layer, const std::vector<double>& wt, int y, int x, Tensor& out) {
  int o = 0;
  for (; o + kOutputBlock <= layer.out_ch; o += kOutputBlock)
    conv_pixel_block<P, kOutputBlock>(input, layer, wt, y, x, o, out);
  for (; o < layer.out_ch; ++o) conv_pixel_block<P, 1>(input, layer, wt, y, x, o, out);
}

}  // namespace

Tensor conv_forward(const Tensor& input, const ConvLayer& layer) {
  if (input.channels != layer.in_ch)
    fail_usage(fmt::format("conv_forward: input has {} channels, layer expects {}", input.channels, layer.in_ch));
  const int H = input.height, W = input.width, cin = layer.in_ch, cout = layer.out_ch;
  const std::vector<double> wt = tap_major_weights(layer);
  Tensor out(H, W, cout);
  // Pixel groups whose taps all stay inside the row; the rest go one at a time.
  const int grouped_end = std::max(0, W - layer.kw + 1 - kPixelBlock + 1);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    int x = 0;
    for (; x < grouped_end; x += kPixelBlock) conv_pixels<kPixelBlock>(input, layer, wt, y, x, out);
    for (; x < W; ++x) conv_pixels<1>(input, layer, wt, y, x, out);
    double* row = out.pixel(y, 0);
    for (std::size_t k = 0; k < static_cast<std::size_t>(W) * cout; ++k) row[k] = activate(layer.activation, row[k]);
  }
  return out;
}

Tensor conv_backward(const Tensor& input, const Tensor& output, const Tensor& d_output, const ConvLayer& layer,
                     LayerGradient& grad, int input_channels) {
  const int H = input.height, W = input.width, cin = layer.in_ch, cout = layer.out_ch;
  if (output.channels != cout || d_output.channels != cout || d_output.height != H || d_output.width != W)
    fail_usage("conv_backward: shape mismatch");
  const int taps = layer.kh * layer.kw;
  const std::size_t wsize = static_cast<std::size_t>(taps) * cin * cout;
  if (grad.weights.size() != wsize) grad.weights.assign(wsize, 0.0);
  if (grad.bias.size() != static_cast<std::size_t>(cout)) grad.bias.assign(cout, 0.0);

  // Gradient with respect to the pre-activation.
  Tensor d_pre(H, W, cout);
  std::vector<std::uint8_t> live(input.pixel_count(), 0);
  for (std::size_t i = 0; i < d_pre.data.size(); ++i) {
    const double g = d_output.data[i] * activation_slope(layer.activation, output.data[i]);
    d_pre.data[i] = g;
    if (g != 0.0) live[i / cout] = 1;
  }

  const int blocks = std::min(H, kGradientBlocks);
  std::vector<std::vector<double>> part_w(blocks, std::vector<double>(wsize, 0.0));
  std::vector<std::vector<double>> part_b(blocks, std::vector<double>(cout, 0.0));
#pragma omp parallel for schedule(dynamic, 1)
  for (int b = 0; b < blocks; ++b) {
    const int y0 = static_cast<int>(static_cast<long>(H) * b / blocks);
    const int y1 = static_cast<int>(static_cast<long>(H) * (b + 1) / blocks);
    double* gw = part_w[b].data();
    double* gb = part_b[b].data();
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < W; ++x) {
        if (!live[static_cast<std::size_t>(y) * W + x]) continue;
        const double* d = d_pre.pixel(y, x);
        for (int o = 0; o < cout; ++o) gb[o] += d[o];
        for (int dy = 0; dy < layer.kh; ++dy) {
          if (y + dy >= H) break;
          for (int dx = 0; dx < layer.kw; ++dx) {
            if (x + dx >= W) break;
            const double* px = input.pixel(y + dy, x + dx);
            double* gk = gw + static_cast<std::size_t>(dy * layer.kw + dx) * cin * cout;
            for (int c = 0; c < cin; ++c) {
              const double v = px[c];
              if (v == 0.0) continue;
              double* gr = gk + static_cast<std::size_t>(c) * cout;
              for (int o = 0; o < cout; ++o) gr[o] += v * d[o];
            }
          }
        }
      }
  }
  // Reduce in block order, then scatter back to the [out][in][kh][kw] layout.
  for (int b = 1; b < blocks; ++b) {
    for (std::size_t k = 0; k < wsize; ++k) part_w[0][k] += part_w[b][k];
    for (int o = 0; o < cout; ++o) part_b[0][o] += part_b[b][o];
  }
  for (int dy = 0; dy < layer.kh; ++dy)
    for (int dx = 0; dx < layer.kw; ++dx) {
      const int tap = dy * layer.kw + dx;
      for (int c = 0; c < cin; ++c)
        for (int o = 0; o < cout; ++o)
          grad.weights[layer.weight_index(o, c, dy, dx)] +=
              part_w[0][(static_cast<std::size_t>(tap) * cin + c) * cout + o];
    }
  for (int o = 0; o < cout; ++o) grad.bias[o] += part_b[0][o];

  const int nin = input_channels < 0 ? cin : std::min(input_channels, cin);
  Tensor d_input(H, W, nin);
  if (nin == 0) return d_input;
  const std::vector<double> wt = tap_major_weights(layer);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double* dst = d_input.pixel(y, x);
      for (int dy = 0; dy < layer.kh; ++dy) {
        const int ys = y - dy;
        if (ys < 0) break;
        for (int dx = 0; dx < layer.kw; ++dx) {
          const int xs = x - dx;
          if (xs < 0) break;
          if (!live[static_cast<std::size_t>(ys) * W + xs]) continue;
          const double* d = d_pre.pixel(ys, xs);
          const double* wk = wt.data() + static_cast<std::size_t>(dy * layer.kw + dx) * cin * cout;
          for (int c = 0; c < nin; ++c) {
            const double* wr = wk + static_cast<std::size_t>(c) * cout;
            double s = 0.0;
            for (int o = 0; o < cout; ++o) s += wr[o] * d[o];
            dst[c] += s;
          }
        }
      }
    }
  return d_input;
}

int ShadingNet::footprint() const {
  int f = 0;
  for (const auto& l : layers) f += std::max(l.kh, l.kw) - 1;
  return f;
}

void ShadingNet::validate() const {
  layout.validate();
  if (layers.empty()) fail_data("shading net: no layers");
  if (layers.front().in_ch != layout.channels())
    fail_data(fmt::format("shading net: first layer takes {} channels, layout provides {}", layers.front().in_ch,
                          layout.channels()));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i > 0 && layers[i].in_ch != layers[i - 1].out_ch)
      fail_data(fmt::format("shading net: layer {} input {} does not chain with output {}", i, layers[i].in_ch,
                            layers[i - 1].out_ch));
  }
  if (layers.back().out_ch != 3 || layers.back().activation != Activation::kSigmoid)
    fail_data("shading net: final layer must be 3-channel sigmoid");
}

std::size_t ShadingNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

Tensor net_forward(const ShadingNet& net, const Tensor& input, ForwardCache* cache) {
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  Tensor x = conv_forward(input, net.layers.front());
  for (std::size_t i = 1; i < net.layers.size(); ++i) {
    Tensor next = conv_forward(x, net.layers[i]);
    if (cache) cache->activations.push_back(std::move(x));
    x = std::move(next);
  }
  if (cache) cache->activations.push_back(x);
  return x;
}

NetGradient NetGradient::zeros_like(const ShadingNet& net) {
  NetGradient g;
  for (const auto& l : net.layers) g.layers.push_back({std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
  return g;
}

void NetGradient::clear() {
  for (auto& l : layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

Tensor net_backward(const ShadingNet& net, const ForwardCache& cache, const Tensor& d_output, NetGradient& grad,
                    int input_channels) {
  if (cache.activations.size() != net.layers.size() + 1) fail_usage("net_backward: forward cache missing");
  if (grad.layers.size() != net.layers.size()) grad = NetGradient::zeros_like(net);
  Tensor d = d_output;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const int nin = i == 0 ? input_channels : -1;
    d = conv_backward(cache.activations[i], cache.activations[i + 1], d, net.layers[i], grad.layers[i], nin);
  }
  return d;
}

NetArchitecture preset_architecture(std::string_view name, int kernel_override) {
  NetArchitecture a;
  if (name == "compact") {
    a = {"compact", 8, 5, 0, false, {{32, 2, Activation::kRelu}, {3, 2, Activation::kSigmoid}}};
  } else if (name == "quality") {
    a = {"quality", 20, 10, 10, true,
         {{256, 3, Activation::kRelu}, {256, 3, Activation::kRelu}, {3, 1, Activation::kSigmoid}}};
  } else {
    fail_usage(fmt::format("unknown net preset '{}' (expected compact or quality)", name));
  }
  if (kernel_override < 0 || kernel_override > 3) fail_usage("kernel override must be 1, 2 or 3");
  if (kernel_override > 0)
    for (auto& l : a.layers) l.kernel = kernel_override;
  return a;
}

InputLayout make_layout(const NetArchitecture& arch, int layer_count, const Aabb& position_bounds) {
  InputLayout l;
  l.layer_count = layer_count;
  l.feature_dim = arch.feature_dim;
  l.pe_view_levels = arch.pe_view_levels;
  l.pe_pos_levels = arch.pe_pos_levels;
  l.use_positions = arch.use_positions;
  l.position_bounds = position_bounds;
  l.validate();
  return l;
}

ShadingNet init_net(const NetArchitecture& arch, const InputLayout& layout, std::uint64_t seed) {
  if (arch.layers.empty()) fail_usage("init_net: empty architecture");
  ShadingNet net;
  net.preset = arch.preset;
  net.layout = layout;
  int in = layout.channels();
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& s = arch.layers[i];
    if (s.out_ch < 1 || s.kernel < 1 || s.kernel > 3) fail_usage("init_net: invalid layer spec");
    ConvLayer layer(in, s.out_ch, s.kernel, s.activation);
    const double bound = std::sqrt(6.0 / (static_cast<double>(s.kernel) * s.kernel * in));
    Rng rng(mix_seed(seed, i));
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    net.layers.push_back(std::move(layer));
    in = s.out_ch;
  }
  net.validate();
  return net;
}

}  // namespace duplex
