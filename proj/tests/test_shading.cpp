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

#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fixtures.hpp"

using namespace duplex;

namespace {

Tensor random_tensor(int h, int w, int c, Rng& rng, double zero_fraction = 0.0) {
  Tensor t(h, w, c);
  for (auto& v : t.data) v = rng.uniform() < zero_fraction ? 0.0 : rng.normal();
  return t;
}

ConvLayer random_layer(int in, int out, int k, Activation act, Rng& rng) {
  ConvLayer l(in, out, k, act);
  for (auto& w : l.weights) w = 0.4 * rng.normal();
  for (auto& b : l.bias) b = 0.2 * rng.normal();
  return l;
}

// Direct transcription of the forward-offset convolution, used as an oracle.
Tensor naive_conv(const Tensor& in, const ConvLayer& l) {
  Tensor out(in.height, in.width, l.out_ch);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int o = 0; o < l.out_ch; ++o) {
        double s = l.bias[o];
        for (int dy = 0; dy < l.kh; ++dy)
          for (int dx = 0; dx < l.kw; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy >= in.height || xx >= in.width) continue;
            for (int i = 0; i < l.in_ch; ++i) s += l.w(o, i, dy, dx) * in.at(yy, xx, i);
          }
        if (l.activation == Activation::kRelu) s = std::max(0.0, s);
        if (l.activation == Activation::kSigmoid) s = 1.0 / (1.0 + std::exp(-s));
        out.at(y, x, o) = s;
      }
  return out;
}

double weighted_sum(const Tensor& t, const Tensor& w) {
  double s = 0;
  for (std::size_t i = 0; i < t.data.size(); ++i) s += t.data[i] * w.data[i];
  return s;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)); }

}  // namespace

TEST_CASE("positional encoding layout") {
  const Vec3 v(0.5, -1.0, 2.0);
  const auto e = positional_encode(v, 2);
  REQUIRE(e.size() == static_cast<std::size_t>(encoded_size(2)));
  CHECK(e[0] == 0.5);
  CHECK(e[1] == -1.0);
  CHECK(e[2] == 2.0);
  for (int a = 0; a < 3; ++a) {
    CHECK(e[3 + a] == doctest::Approx(std::sin(v[a])));
    CHECK(e[6 + a] == doctest::Approx(std::cos(v[a])));
    CHECK(e[9 + a] == doctest::Approx(std::sin(2 * v[a])));
    CHECK(e[12 + a] == doctest::Approx(std::cos(2 * v[a])));
  }
  CHECK(positional_encode(v, 0).size() == 3);
  CHECK(encoded_size(5) == 33);
  CHECK(encoded_size(10) == 63);
}

TEST_CASE("preset input widths") {
  const auto compact = preset_architecture("compact");
  const InputLayout lc = make_layout(compact, 2, Aabb::cube(1));
  CHECK(lc.channels() == 2 * 8 + 2 + 33);
  const auto quality = preset_architecture("quality");
  const InputLayout lq = make_layout(quality, 2, Aabb::cube(1));
  CHECK(lq.channels() == 2 * 20 + 2 + 63 + 2 * 63);
  CHECK(make_layout(compact, 1, Aabb::cube(1)).channels() == 8 + 1 + 33);
  CHECK(make_layout(compact, 4, Aabb::cube(1)).channels() == 4 * 8 + 4 + 33);

  const auto groups = lq.groups();
  int next = 0;
  for (const auto& g : groups) {
    CHECK(g.offset == next);
    next += g.count;
  }
  CHECK(next == lq.channels());
}

TEST_CASE("preset architectures and kernel override") {
  const auto c = preset_architecture("compact");
  REQUIRE(c.layers.size() == 2);
  CHECK(c.feature_dim == 8);
  CHECK(c.layers[0].kernel == 2);
  CHECK(c.layers[0].out_ch == 32);
  CHECK(c.layers[0].activation == Activation::kRelu);
  CHECK(c.layers[1].out_ch == 3);
  CHECK(c.layers[1].activation == Activation::kSigmoid);
  const auto q = preset_architecture("quality");
  REQUIRE(q.layers.size() == 3);
  CHECK(q.layers[0].kernel == 3);
  CHECK(q.layers[1].out_ch == 256);
  CHECK(q.layers[2].kernel == 1);
  CHECK(q.use_positions);
  for (const auto& l : preset_architecture("compact", 1).layers) CHECK(l.kernel == 1);
  for (const auto& l : preset_architecture("quality", 2).layers) CHECK(l.kernel == 2);
  CHECK_THROWS_AS(preset_architecture("huge"), Error);
  CHECK_THROWS_AS(preset_architecture("compact", -1), Error);
}

TEST_CASE("network initialization") {
  const auto arch = preset_architecture("compact");
  const auto layout = make_layout(arch, 2, Aabb::cube(1));
  const ShadingNet a = init_net(arch, layout, 5);
  const ShadingNet b = init_net(arch, layout, 5);
  const ShadingNet c = init_net(arch, layout, 6);
  CHECK_NOTHROW(a.validate());
  CHECK(a.layers[0].weights == b.layers[0].weights);
  CHECK(a.layers[0].weights != c.layers[0].weights);
  CHECK(a.parameter_count() == (51 * 32 * 4 + 32) + (32 * 3 * 4 + 3));
  CHECK(a.footprint() == 2);
  CHECK(init_net(preset_architecture("quality"), make_layout(preset_architecture("quality"), 2, Aabb::cube(1)), 0)
            .footprint() == 4);
  for (const auto& l : a.layers) {
    const double bound = std::sqrt(6.0 / (l.kh * l.kw * l.in_ch));
    for (double w : l.weights) CHECK(std::abs(w) <= bound);
    for (double x : l.bias) CHECK(x == 0.0);
  }
}

TEST_CASE("net validation rejects inconsistent shapes") {
  const auto arch = preset_architecture("compact");
  ShadingNet net = init_net(arch, make_layout(arch, 2, Aabb::cube(1)), 1);
  ShadingNet bad = net;
  bad.layers[1].activation = Activation::kRelu;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = net;
  bad.layers[1] = ConvLayer(31, 3, 2, Activation::kSigmoid);
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = net;
  bad.layers[0].weights.pop_back();
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("activation names round trip") {
  for (Activation a : {Activation::kNone, Activation::kRelu, Activation::kSigmoid})
    CHECK(activation_from_name(activation_name(a)) == a);
  CHECK_THROWS_AS(activation_from_name("tanh"), Error);
}

TEST_CASE("convolution matches the direct oracle") {
  Rng rng(1);
  for (int k : {1, 2, 3})
    for (Activation act : {Activation::kNone, Activation::kRelu, Activation::kSigmoid}) {
      const Tensor in = random_tensor(7, 9, 5, rng, 0.3);
      const ConvLayer l = random_layer(5, 4, k, act, rng);
      const Tensor got = conv_forward(in, l);
      const Tensor want = naive_conv(in, l);
      REQUIRE(got.data.size() == want.data.size());
      for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
  const Tensor wrong(3, 3, 2);
  CHECK_THROWS_AS(conv_forward(wrong, ConvLayer(3, 1, 1, Activation::kNone)), Error);
}

TEST_CASE("convolution gradients match central differences") {
  Rng rng(2);
  for (int k : {1, 2, 3})
    for (Activation act : {Activation::kNone, Activation::kRelu, Activation::kSigmoid}) {
      Tensor in = random_tensor(5, 6, 3, rng, 0.2);
      ConvLayer l = random_layer(3, 4, k, act, rng);
      const Tensor out = conv_forward(in, l);
      const Tensor proj = random_tensor(5, 6, 4, rng);
      LayerGradient g{std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)};
      const Tensor d_in = conv_backward(in, out, proj, l, g);
      const double h = 1e-6;
      auto loss = [&] { return weighted_sum(conv_forward(in, l), proj); };
      for (std::size_t i = 0; i < l.weights.size(); i += 3) {
        const double w0 = l.weights[i];
        l.weights[i] = w0 + h;
        const double up = loss();
        l.weights[i] = w0 - h;
        const double dn = loss();
        l.weights[i] = w0;
        CHECK(rel_err(g.weights[i], (up - dn) / (2 * h)) < 1e-5);
      }
      for (std::size_t o = 0; o < l.bias.size(); ++o) {
        const double b0 = l.bias[o];
        l.bias[o] = b0 + h;
        const double up = loss();
        l.bias[o] = b0 - h;
        const double dn = loss();
        l.bias[o] = b0;
        CHECK(rel_err(g.bias[o], (up - dn) / (2 * h)) < 1e-5);
      }
      for (std::size_t i = 0; i < in.data.size(); i += 2) {
        const double x0 = in.data[i];
        in.data[i] = x0 + h;
        const double up = loss();
        in.data[i] = x0 - h;
        const double dn = loss();
        in.data[i] = x0;
        CHECK(rel_err(d_in.data[i], (up - dn) / (2 * h)) < 1e-5);
      }
    }
}

TEST_CASE("partial input gradient returns only the leading channels") {
  Rng rng(3);
  const Tensor in = random_tensor(4, 4, 6, rng);
  const ConvLayer l = random_layer(6, 2, 2, Activation::kNone, rng);
  const Tensor out = conv_forward(in, l);
  const Tensor proj = random_tensor(4, 4, 2, rng);
  LayerGradient g1{std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)};
  LayerGradient g2 = g1;
  const Tensor full = conv_backward(in, out, proj, l, g1);
  const Tensor part = conv_backward(in, out, proj, l, g2, 2);
  REQUIRE(part.channels == 2);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 2; ++c) CHECK(part.at(y, x, c) == full.at(y, x, c));
  CHECK(g1.weights == g2.weights);
}

TEST_CASE("parameter gradients accumulate across calls") {
  Rng rng(4);
  const Tensor in = random_tensor(4, 5, 3, rng);
  const ConvLayer l = random_layer(3, 2, 2, Activation::kRelu, rng);
  const Tensor out = conv_forward(in, l);
  const Tensor proj = random_tensor(4, 5, 2, rng);
  LayerGradient once{std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)};
  LayerGradient twice = once;
  conv_backward(in, out, proj, l, once);
  conv_backward(in, out, proj, l, twice);
  conv_backward(in, out, proj, l, twice);
  for (std::size_t i = 0; i < once.weights.size(); ++i) CHECK(twice.weights[i] == doctest::Approx(2 * once.weights[i]));
}

TEST_CASE("whole-network gradients match central differences") {
  Rng rng(5);
  for (const char* preset : {"compact"}) {
    auto arch = preset_architecture(preset);
    const InputLayout layout = make_layout(arch, 2, Aabb::cube(1));
    ShadingNet net = init_net(arch, layout, 9);
    for (auto& l : net.layers)
      for (auto& b : l.bias) b = 0.1 * rng.normal();
    Tensor in = random_tensor(5, 5, layout.channels(), rng, 0.3);
    const Tensor proj = random_tensor(5, 5, 3, rng);
    ForwardCache cache;
    const Tensor out = net_forward(net, in, &cache);
    REQUIRE(cache.activations.size() == net.layers.size() + 1);
    for (double v : out.data) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    NetGradient g = NetGradient::zeros_like(net);
    const Tensor d_in = net_backward(net, cache, proj, g);
    const double h = 1e-6;
    auto loss = [&] { return weighted_sum(net_forward(net, in), proj); };
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      auto& w = net.layers[li].weights;
      for (std::size_t i = 0; i < w.size(); i += 37) {
        const double w0 = w[i];
        w[i] = w0 + h;
        const double up = loss();
        w[i] = w0 - h;
        const double dn = loss();
        w[i] = w0;
        CHECK(rel_err(g.layers[li].weights[i], (up - dn) / (2 * h)) < 1e-5);
      }
    }
    for (std::size_t i = 0; i < in.data.size(); i += 11) {
      const double x0 = in.data[i];
      in.data[i] = x0 + h;
      const double up = loss();
      in.data[i] = x0 - h;
      const double dn = loss();
      in.data[i] = x0;
      INFO("analytic ", d_in.data[i], " numeric ", (up - dn) / (2 * h));
      // Small input gradients sit near the difference quotient's roundoff floor.
      CHECK(std::abs(d_in.data[i] - (up - dn) / (2 * h)) < 1e-5 * std::max(std::abs(d_in.data[i]), 1e-3));
    }
    g.clear();
    for (const auto& l : g.layers)
      for (double x : l.weights) CHECK(x == 0.0);
  }
}

TEST_CASE("input assembly places every channel group") {
  const auto arch = preset_architecture("quality");
  const DuplexGeometry d = testing::ramp_duplex(14, arch.feature_dim);
  const InputLayout layout = make_layout(arch, 2, Aabb::cube(1.0));
  const Camera cam = testing::front_camera(16);
  const GBuffer g = rasterize(d, build_layer_bvhs(d), cam);
  const Tensor in = assemble_input(g, layout);
  REQUIRE(in.channels == layout.channels());
  int checked = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * 16 + x;
      const double* px = in.pixel(y, x);
      for (int l = 0; l < 2; ++l) {
        const auto& L = g.layers[l];
        CHECK(px[layout.mask_offset() + l] == static_cast<double>(L.mask[i]));
        for (int c = 0; c < arch.feature_dim; ++c) CHECK(px[layout.feature_offset(l) + c] == L.features[i * arch.feature_dim + c]);
        const auto pe = L.mask[i] ? positional_encode(L.position[i], layout.pe_pos_levels)
                                  : std::vector<double>(encoded_size(layout.pe_pos_levels), 0.0);
        for (std::size_t c = 0; c < pe.size(); ++c) CHECK(px[layout.position_offset(l) + c] == doctest::Approx(pe[c]));
        checked += L.mask[i];
      }
      const auto pv = positional_encode(g.view_dir[i], layout.pe_view_levels);
      for (std::size_t c = 0; c < pv.size(); ++c) CHECK(px[layout.view_offset() + c] == pv[c]);
    }
  CHECK(checked > 0);

  InputLayout mismatched = layout;
  mismatched.layer_count = 3;
  CHECK_THROWS_AS(assemble_input(g, mismatched), Error);
}

TEST_CASE("network output is translation equivariant away from the borders") {
  Rng rng(21);
  const auto arch = preset_architecture("compact");
  const InputLayout layout = make_layout(arch, 2, Aabb::cube(1));
  ShadingNet net = init_net(arch, layout, 4);
  for (auto& l : net.layers)
    for (auto& b : l.bias) b = 0.1 * rng.normal();
  const int n = 13, c = layout.channels();
  const Tensor in = random_tensor(n, n, c, rng, 0.2);
  Tensor shifted(n - 1, n - 1, c);
  for (int y = 0; y < n - 1; ++y)
    for (int x = 0; x < n - 1; ++x)
      for (int k = 0; k < c; ++k) shifted.at(y, x, k) = in.at(y + 1, x + 1, k);
  const Tensor a = net_forward(net, in);
  const Tensor b = net_forward(net, shifted);
  // Two stacked 2x2 layers read up to two pixels ahead.
  for (int y = 0; y + 2 < n - 1; ++y)
    for (int x = 0; x + 2 < n - 1; ++x)
      for (int k = 0; k < 3; ++k) CHECK(b.at(y, x, k) == a.at(y + 1, x + 1, k));
}

TEST_CASE("1x1 kernels shade every pixel independently") {
  Rng rng(22);
  const auto arch = preset_architecture("compact", 1);
  const InputLayout layout = make_layout(arch, 2, Aabb::cube(1));
  const ShadingNet net = init_net(arch, layout, 5);
  const int h = 7, w = 11, c = layout.channels();
  const Tensor in = random_tensor(h, w, c, rng, 0.2);
  std::vector<int> perm(h * w);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(3));
  Tensor permuted(h, w, c);
  for (int p = 0; p < h * w; ++p)
    std::copy_n(in.pixel(perm[p] / w, perm[p] % w), c, permuted.pixel(p / w, p % w));
  const Tensor a = net_forward(net, in);
  const Tensor b = net_forward(net, permuted);
  for (int p = 0; p < h * w; ++p)
    for (int k = 0; k < 3; ++k) CHECK(b.at(p / w, p % w, k) == a.at(perm[p] / w, perm[p] % w, k));
}

TEST_CASE("forward pass does not depend on the thread count") {
  Rng rng(23);
  const auto arch = preset_architecture("quality");
  const InputLayout layout = make_layout(arch, 2, Aabb::cube(1));
  const ShadingNet net = init_net(arch, layout, 6);
  const Tensor in = random_tensor(9, 10, layout.channels(), rng, 0.3);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const Tensor one = net_forward(net, in);
  omp_set_num_threads(3);
  const Tensor three = net_forward(net, in);
  omp_set_num_threads(saved);
  CHECK(one.data == three.data);
}
