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

// Full model rendering (rasterize, assemble, shade, composite) and its adjoint,
// plus teacher renders of a volumetric field.

#ifndef DUPLEX_RENDER_HPP
#define DUPLEX_RENDER_HPP

#include "duplex/metrics.hpp"
#include "duplex/shading.hpp"

namespace duplex {

struct DuplexModel {
  DuplexGeometry geometry;
  ShadingNet net;
  Vec3 background{1, 1, 1};

  void validate() const;
};

/// Hit records of one view, kept sparse so many training views fit in memory.
/// Expanding it reproduces rasterize_geometry bit-for-bit.
struct ViewRaster {
  struct Entry {
    std::uint32_t pixel;
    std::uint32_t tri;
    double b1, b2;  // b0 = 1 - b1 - b2
  };
  std::vector<std::vector<Entry>> layers;

  static ViewRaster capture(const GBuffer& gbuf);
  GBuffer expand(const DuplexGeometry& geometry, const Camera& cam) const;
  std::size_t hit_count() const;
};

/// Sub-rectangle [x0, x0 + w) x [y0, y0 + h) of a G-buffer.
GBuffer crop_gbuffer(const GBuffer& gbuf, int x0, int y0, int w, int h);

/// Net output with all-miss pixels replaced by the background.
Tensor composite_background(Tensor rgb, const GBuffer& gbuf, const Vec3& background);

struct RenderOutput {
  Tensor rgb;  // H x W x 3
  GBuffer gbuf;
  ForwardCache cache;
};

/// Shades an already rasterized G-buffer (features gathered).
RenderOutput shade(const DuplexModel& model, GBuffer gbuf, bool keep_cache);
RenderOutput render_model(const DuplexModel& model, const std::vector<Bvh>& bvhs, const Camera& cam,
                          bool keep_cache = false);
ImageF render_image(const DuplexModel& model, const std::vector<Bvh>& bvhs, const Camera& cam);

ImageF to_image(const Tensor& rgb);

struct ModelGradient {
  NetGradient net;
  std::vector<std::vector<double>> features;  // per layer, vertex-major like FeatureMesh

  static ModelGradient zeros_like(const DuplexModel& model);
  void clear();
};

/// Accumulates gradients for dLoss/dRGB. All-miss pixels are ignored since the
/// composited output there does not depend on any parameter. Vertex positions
/// are never touched.
void backward(const DuplexModel& model, const RenderOutput& out, const Tensor& d_rgb, ModelGradient& grad);

/// Oracle image: one ray per pixel clipped to the field bounds, midpoint
/// quadrature with n_steps, composited over the background.
ImageF render_teacher(const VolumetricField& field, const Camera& cam, int n_steps, const Vec3& background);

}  // namespace duplex

#endif  // DUPLEX_RENDER_HPP
