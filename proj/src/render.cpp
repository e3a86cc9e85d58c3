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

#include "duplex/render.hpp"

#include <fmt/format.h>

namespace duplex {

void DuplexModel::validate() const {
  geometry.validate();
  net.validate();
  if (static_cast<int>(geometry.layer_count()) != net.layout.layer_count)
    fail_data(fmt::format("model: {} mesh layers but the net expects {}", geometry.layer_count(),
                          net.layout.layer_count));
  if (geometry.feature_dim() != net.layout.feature_dim)
    fail_data(fmt::format("model: feature dim {} but the net expects {}", geometry.feature_dim(),
                          net.layout.feature_dim));
  if (!is_finite(background)) fail_data("model: non-finite background");
}

ViewRaster ViewRaster::capture(const GBuffer& gbuf) {
  ViewRaster v;
  v.layers.resize(gbuf.layers.size());
  for (std::size_t l = 0; l < gbuf.layers.size(); ++l) {
    const auto& L = gbuf.layers[l];
    for (std::size_t i = 0; i < gbuf.pixel_count(); ++i)
      if (L.mask[i])
        v.layers[l].push_back({static_cast<std::uint32_t>(i), L.tri[i], L.bary[i][1], L.bary[i][2]});
  }
  return v;
}

GBuffer ViewRaster::expand(const DuplexGeometry& geometry, const Camera& cam) const {
  if (layers.size() != geometry.layer_count()) fail_usage("view raster: layer count mismatch");
  GBuffer g = empty_gbuffer(cam, geometry.layer_count(), geometry.feature_dim());
  for (std::size_t l = 0; l < layers.size(); ++l)
    for (const auto& e : layers[l]) {
      Hit h;
      h.tri = e.tri;
      h.bary = {1.0 - e.b1 - e.b2, e.b1, e.b2};
      record_hit(g.layers[l], e.pixel, geometry.layers[l].mesh, h, cam);
    }
  gather_features(g, geometry);
  return g;
}

std::size_t ViewRaster::hit_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.size();
  return n;
}

GBuffer crop_gbuffer(const GBuffer& gbuf, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > gbuf.width || y0 + h > gbuf.height)
    fail_usage("crop_gbuffer: window outside the image");
  GBuffer c;
  c.width = w;
  c.height = h;
  c.feature_dim = gbuf.feature_dim;
  c.layers.resize(gbuf.layers.size());
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const auto f = static_cast<std::size_t>(gbuf.feature_dim);
  c.view_dir.resize(n);
  for (std::size_t l = 0; l < gbuf.layers.size(); ++l) {
    const auto& S = gbuf.layers[l];
    auto& D = c.layers[l];
    D.mask.resize(n);
    D.position.resize(n);
    D.bary.resize(n);
    D.tri.resize(n);
    D.depth.resize(n);
    D.features.resize(S.features.empty() ? 0 : n * f);
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t s = static_cast<std::size_t>(y + y0) * gbuf.width + (x + x0);
      const std::size_t d = static_cast<std::size_t>(y) * w + x;
      c.view_dir[d] = gbuf.view_dir[s];
      for (std::size_t l = 0; l < gbuf.layers.size(); ++l) {
        const auto& S = gbuf.layers[l];
        auto& D = c.layers[l];
        D.mask[d] = S.mask[s];
        D.position[d] = S.position[s];
        D.bary[d] = S.bary[s];
        D.tri[d] = S.tri[s];
        D.depth[d] = S.depth[s];
        if (!S.features.empty()) std::copy_n(S.features.data() + s * f, f, D.features.data() + d * f);
      }
    }
  return c;
}

Tensor composite_background(Tensor rgb, const GBuffer& gbuf, const Vec3& background) {
  for (std::size_t i = 0; i < gbuf.pixel_count(); ++i)
    if (gbuf.all_miss(i))
      for (int c = 0; c < 3; ++c) rgb.data[i * 3 + c] = background[c];
  return rgb;
}

RenderOutput shade(const DuplexModel& model, GBuffer gbuf, bool keep_cache) {
  RenderOutput out;
  const Tensor input = assemble_input(gbuf, model.net.layout);
  out.rgb = composite_background(net_forward(model.net, input, keep_cache ? &out.cache : nullptr), gbuf,
                                 model.background);
  out.gbuf = std::move(gbuf);
  return out;
}

RenderOutput render_model(const DuplexModel& model, const std::vector<Bvh>& bvhs, const Camera& cam,
                          bool keep_cache) {
  return shade(model, rasterize(model.geometry, bvhs, cam), keep_cache);
}

ImageF render_image(const DuplexModel& model, const std::vector<Bvh>& bvhs, const Camera& cam) {
  return to_image(render_model(model, bvhs, cam).rgb);
}

ImageF to_image(const Tensor& rgb) {
  if (rgb.channels != 3) fail_usage("to_image: expected 3 channels");
  return ImageF(rgb.width, rgb.height, rgb.data);
}

ModelGradient ModelGradient::zeros_like(const DuplexModel& model) {
  ModelGradient g;
  g.net = NetGradient::zeros_like(model.net);
  for (const auto& l : model.geometry.layers) g.features.emplace_back(l.features.size(), 0.0);
  return g;
}

void ModelGradient::clear() {
  net.clear();
  for (auto& f : features) std::fill(f.begin(), f.end(), 0.0);
}

void backward(const DuplexModel& model, const RenderOutput& out, const Tensor& d_rgb, ModelGradient& grad) {
  const GBuffer& g = out.gbuf;
  if (d_rgb.height != g.height || d_rgb.width != g.width || d_rgb.channels != 3)
    fail_usage("backward: gradient image shape mismatch");
  if (grad.features.size() != model.geometry.layer_count()) grad = ModelGradient::zeros_like(model);

  Tensor d = d_rgb;
  for (std::size_t i = 0; i < g.pixel_count(); ++i)
    if (g.all_miss(i))
      for (int c = 0; c < 3; ++c) d.data[i * 3 + c] = 0.0;

  const auto& layout = model.net.layout;
  const int f = layout.feature_dim;
  const Tensor d_in = net_backward(model.net, out.cache, d, grad.net, layout.layer_count * f);

  // Serial scatter in pixel order keeps the sum independent of the thread count.
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const auto& L = g.layers[l];
    const auto& fm = model.geometry.layers[l];
    for (std::size_t i = 0; i < g.pixel_count(); ++i) {
      if (!L.mask[i]) continue;
      Hit h;
      h.tri = L.tri[i];
      h.bary = L.bary[i];
      scatter_feature_gradient(grad.features[l], fm, h,
                               std::span<const double>(d_in.data.data() + i * d_in.channels + layout.feature_offset(l), f));
    }
  }
}

ImageF render_teacher(const VolumetricField& field, const Camera& cam, int n_steps, const Vec3& background) {
  if (n_steps < 1) fail_usage("render_teacher: n_steps must be at least 1");
  const int w = cam.width(), h = cam.height();
  std::vector<double> rgb(static_cast<std::size_t>(w) * h * 3);
#pragma omp parallel for schedule(dynamic, 2)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto ray = ray_for_pixel(cam, x, y, field.bounds());
      const Vec3 c = ray ? volume_render(field, *ray, n_steps).composite(background) : background;
      for (int k = 0; k < 3; ++k) rgb[(static_cast<std::size_t>(y) * w + x) * 3 + k] = c[k];
    }
  return ImageF(w, h, std::move(rgb));
}

}  // namespace duplex
