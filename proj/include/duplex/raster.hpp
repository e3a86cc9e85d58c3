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

// CPU stand-in for hardware rasterization: one nearest-hit ray per pixel and
// per layer, barycentric feature interpolation and its adjoint.

#ifndef DUPLEX_RASTER_HPP
#define DUPLEX_RASTER_HPP

#include "duplex/camera.hpp"
#include "duplex/geometry.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace duplex {

struct Hit {
  double t = 0;
  std::uint32_t tri = 0;
  std::array<double, 3> bary{1, 0, 0};
};

/// Moller-Trumbore against one triangle (epsilon 1e-9 on the determinant,
/// both faces). Shared by the BVH and brute-force paths so they agree bit-for-bit.
std::optional<Hit> intersect_triangle(const Vec3& v0, const Vec3& v1, const Vec3& v2,
                                      std::uint32_t tri, const Ray& ray);

/// Nearest hit over all triangles; ties go to the smaller triangle index.
std::optional<Hit> intersect_brute_force(const TriangleMesh& mesh, const Ray& ray);

class Bvh {
 public:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: first slot in the triangle order; inner: right child
    std::uint32_t count = 0;  // > 0 for leaves
  };

  /// Empty hierarchy; every query misses.
  Bvh() = default;

  const std::vector<Node>& nodes() const { return nodes_; }
  /// Triangle indices in leaf order.
  const std::vector<std::uint32_t>& order() const { return order_; }
  bool empty() const { return nodes_.empty(); }

  std::optional<Hit> intersect(const Ray& ray) const;

 private:
  friend Bvh build_bvh(const TriangleMesh& mesh);
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<Vec3> corners_;  // three vertices per slot, in leaf order
};

/// Median split on the longest centroid axis; leaves hold at most 4 triangles.
/// Throws on an empty mesh.
Bvh build_bvh(const TriangleMesh& mesh);

/// One hierarchy per layer; empty layers get an empty hierarchy.
std::vector<Bvh> build_layer_bvhs(const DuplexGeometry& duplex);

inline std::optional<Hit> intersect(const Bvh& bvh, const Ray& ray) { return bvh.intersect(ray); }

struct GBufferLayer {
  std::vector<std::uint8_t> mask;     // 1 = hit
  std::vector<Vec3> position;         // world position of the hit
  std::vector<std::array<double, 3>> bary;
  std::vector<std::uint32_t> tri;
  std::vector<double> depth;          // camera z; +inf on a miss
  std::vector<double> features;       // pixel-major, feature_dim per pixel; zero on a miss
};

struct GBuffer {
  int width = 0;
  int height = 0;
  int feature_dim = 0;
  std::vector<GBufferLayer> layers;
  std::vector<Vec3> view_dir;  // unit ray direction per pixel

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  /// True when no layer is hit at pixel index i.
  bool all_miss(std::size_t i) const;
};

/// G-buffer with every layer missing and view directions filled in.
GBuffer empty_gbuffer(const Camera& cam, std::size_t layer_count, int feature_dim);
/// Writes one hit into a layer slot; position and depth are derived from the barycentrics.
void record_hit(GBufferLayer& layer, std::size_t pixel, const TriangleMesh& mesh, const Hit& hit,
                const Camera& cam);

/// Geometry pass only (masks, positions, barycentrics, depth, view directions).
GBuffer rasterize_geometry(const DuplexGeometry& duplex, const std::vector<Bvh>& bvhs,
                           const Camera& cam);
/// Fills per-layer feature slots from the current vertex features.
void gather_features(GBuffer& gbuf, const DuplexGeometry& duplex);
/// Both passes.
GBuffer rasterize(const DuplexGeometry& duplex, const std::vector<Bvh>& bvhs, const Camera& cam);

/// f = b0 f[v0] + b1 f[v1] + b2 f[v2].
void interpolate_feature(const FeatureMesh& fm, const Hit& hit, std::span<double> out);
std::vector<double> interpolate_feature(const FeatureMesh& fm, const Hit& hit);

/// grad[v_i] += b_i * upstream. `grad` is vertex-major like FeatureMesh::features.
void scatter_feature_gradient(std::span<double> grad, const FeatureMesh& fm, const Hit& hit,
                              std::span<const double> upstream);

}  // namespace duplex

#endif  // DUPLEX_RASTER_HPP
