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

// Duplex / multi-layer mesh geometry extracted from a density grid.

#ifndef DUPLEX_GEOMETRY_HPP
#define DUPLEX_GEOMETRY_HPP

#include "duplex/field.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace duplex {

using Triangle = std::array<std::uint32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return triangles.empty(); }
  Aabb bounds() const;
  /// Unnormalised face normal (v1 - v0) x (v2 - v0).
  Vec3 face_normal(std::size_t tri) const;
  /// Throws when an index is out of range or a triangle is degenerate.
  void validate() const;
};

/// Per-vertex learnable features, stored row-major: vertex v owns
/// features[v * feature_dim, (v + 1) * feature_dim).
struct FeatureMesh {
  TriangleMesh mesh;
  int feature_dim = 0;
  std::vector<double> features;

  std::size_t vertex_count() const { return mesh.vertices.size(); }
  const double* feature(std::size_t v) const { return features.data() + v * feature_dim; }
  double* feature(std::size_t v) { return features.data() + v * feature_dim; }
  void validate() const;
};

/// Layers ordered outermost (lowest iso-level) first.
struct DuplexGeometry {
  std::vector<FeatureMesh> layers;
  std::vector<double> thresholds;

  std::size_t layer_count() const { return layers.size(); }
  int feature_dim() const { return layers.empty() ? 0 : layers.front().feature_dim; }
  void validate() const;
};

/// Welded 256-case marching cubes. Normals face decreasing density. Returns an
/// empty mesh when iso is outside the open range of grid values.
TriangleMesh marching_cubes(const DensityGrid& grid, double iso);

/// Removes edge-connected components whose bounding-box diagonal is below
/// min_diameter. The component with the largest diagonal always survives.
TriangleMesh filter_components(const TriangleMesh& mesh, double min_diameter);

/// Features drawn i.i.d. from N(0, 0.1^2).
FeatureMesh attach_features(TriangleMesh mesh, int feature_dim, std::uint64_t seed);

/// Default component filter: three voxel diagonals of the grid.
double default_min_diameter(const DensityGrid& grid);

DuplexGeometry extract_duplex(const DensityGrid& grid, const std::vector<double>& thresholds,
                              double min_diameter, int feature_dim, std::uint64_t seed);

/// Displaces every vertex by a vector drawn uniformly from the ball of radius
/// `amplitude`. Welded vertices move together, so meshes stay closed.
void perturb_vertices(DuplexGeometry& duplex, double amplitude, std::uint64_t seed);

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Connected components over shared mesh edges; returns a label per vertex and the count.
std::vector<std::uint32_t> component_labels(const TriangleMesh& mesh, std::uint32_t* count);

}  // namespace duplex

#endif  // DUPLEX_GEOMETRY_HPP
