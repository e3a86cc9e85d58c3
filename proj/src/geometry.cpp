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

#include "duplex/geometry.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "mc_tables.inc"

namespace duplex {

Aabb TriangleMesh::bounds() const {
  Aabb b = Aabb::empty();
  for (const auto& v : vertices) b.extend(v);
  return b;
}

Vec3 TriangleMesh::face_normal(std::size_t tri) const {
  const auto& t = triangles[tri];
  const Vec3& a = vertices[t[0]];
  return (vertices[t[1]] - a).cross(vertices[t[2]] - a);
}

void TriangleMesh::validate() const {
  const auto n = vertices.size();
  for (const auto& v : vertices)
    if (!is_finite(v)) fail_data("mesh: non-finite vertex position");
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    for (auto idx : triangles[i])
      if (idx >= n) fail_data(fmt::format("mesh: triangle {} references vertex {} >= {}", i, idx, n));
    if (0.5 * face_normal(i).norm() < 1e-12) fail_data(fmt::format("mesh: triangle {} is degenerate", i));
  }
}

void FeatureMesh::validate() const {
  mesh.validate();
  if (feature_dim < 1) fail_data("feature mesh: feature_dim must be >= 1");
  if (features.size() != mesh.vertices.size() * static_cast<std::size_t>(feature_dim))
    fail_data("feature mesh: feature count does not match vertex count");
  for (double f : features)
    if (!std::isfinite(f)) fail_data("feature mesh: non-finite feature");
}

void DuplexGeometry::validate() const {
  if (layers.empty()) fail_data("duplex: needs at least one layer");
  if (layers.size() != thresholds.size()) fail_data("duplex: one threshold per layer required");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1])) fail_data("duplex: thresholds must be strictly increasing");
  for (const auto& l : layers) {
    l.validate();
    if (l.feature_dim != layers.front().feature_dim) fail_data("duplex: layers disagree on feature_dim");
  }
}

// ---------------------------------------------------------------------------
// Marching cubes

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// The table already winds triangles so that normals face decreasing values.
constexpr bool kFlipWinding = false;

struct EdgeTriangle {
  std::array<std::uint64_t, 3> keys;
};

}  // namespace

TriangleMesh marching_cubes(const DensityGrid& grid, double iso) {
  TriangleMesh out;
  const auto& vals = grid.values();
  const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
  if (!(iso > *mn && iso < *mx)) return out;

  const auto res = grid.resolution();
  const int nx = res[0], ny = res[1], nz = res[2];
  auto lin = [&](int i, int j, int k) {
    return (static_cast<std::uint64_t>(k) * ny + j) * nx + i;
  };

  // Each slab of cells emits triangles as triples of edge keys; keys are
  // welded into vertices afterwards in slab order, so the result does not
  // depend on how slabs were scheduled.
  std::vector<std::vector<EdgeTriangle>> slabs(nz - 1);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < nz - 1; ++k) {
    auto& tris = slabs[k];
    for (int j = 0; j < ny - 1; ++j) {
      for (int i = 0; i < nx - 1; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c)
          if (grid.at(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]) < iso) cube |= 1 << c;
        if (mc_tables::kEdgeTable[cube] == 0) continue;
        std::uint64_t edge_key[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mc_tables::kEdgeTable[cube] & (1 << e))) continue;
          const int* a = kCorner[kEdgeCorners[e][0]];
          const int* b = kCorner[kEdgeCorners[e][1]];
          int axis = 0;
          while (a[axis] == b[axis]) ++axis;
          const int* lo = a[axis] < b[axis] ? a : b;
          edge_key[e] = lin(i + lo[0], j + lo[1], k + lo[2]) * 3 + axis;
        }
        const int* row = mc_tables::kTriTable[cube];
        for (int t = 0; row[t] != -1; t += 3) {
          EdgeTriangle tri{{edge_key[row[t]], edge_key[row[t + 1]], edge_key[row[t + 2]]}};
          if (kFlipWinding) std::swap(tri.keys[1], tri.keys[2]);
          tris.push_back(tri);
        }
      }
    }
  }

  std::unordered_map<std::uint64_t, std::uint32_t> welded;
  auto vertex_for = [&](std::uint64_t key) {
    auto [it, inserted] = welded.try_emplace(key, static_cast<std::uint32_t>(out.vertices.size()));
    if (inserted) {
      const int axis = static_cast<int>(key % 3);
      std::uint64_t idx = key / 3;
      const int i = static_cast<int>(idx % nx);
      idx /= nx;
      const int j = static_cast<int>(idx % ny);
      const int k = static_cast<int>(idx / ny);
      const int i1 = i + (axis == 0), j1 = j + (axis == 1), k1 = k + (axis == 2);
      const double va = grid.at(i, j, k), vb = grid.at(i1, j1, k1);
      const double t = std::clamp((iso - va) / (vb - va), 0.0, 1.0);
      const Vec3 pa = grid.lattice_point(i, j, k), pb = grid.lattice_point(i1, j1, k1);
      out.vertices.push_back(pa + t * (pb - pa));
    }
    return it->second;
  };
  for (const auto& slab : slabs)
    for (const auto& tri : slab)
      out.triangles.push_back({vertex_for(tri.keys[0]), vertex_for(tri.keys[1]), vertex_for(tri.keys[2])});

  // Drop degenerate triangles (iso hitting a lattice value exactly) and any
  // vertex they leave unreferenced.
  std::vector<Triangle> kept;
  kept.reserve(out.triangles.size());
  for (std::size_t t = 0; t < out.triangles.size(); ++t)
    if (0.5 * out.face_normal(t).norm() >= 1e-12) kept.push_back(out.triangles[t]);
  if (kept.size() != out.triangles.size()) {
    std::vector<std::int64_t> remap(out.vertices.size(), -1);
    std::vector<Vec3> verts;
    for (auto& tri : kept)
      for (auto& v : tri) {
        if (remap[v] < 0) {
          remap[v] = static_cast<std::int64_t>(verts.size());
          verts.push_back(out.vertices[v]);
        }
        v = static_cast<std::uint32_t>(remap[v]);
      }
    out.vertices = std::move(verts);
  }
  out.triangles = std::move(kept);
  return out;
}

// ---------------------------------------------------------------------------
// Components

namespace {

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::uint32_t> parent;
};

}  // namespace

std::vector<std::uint32_t> component_labels(const TriangleMesh& mesh, std::uint32_t* count) {
  DisjointSets sets(mesh.vertices.size());
  for (const auto& t : mesh.triangles) {
    sets.unite(t[0], t[1]);
    sets.unite(t[1], t[2]);
  }
  std::vector<std::uint32_t> labels(mesh.vertices.size());
  std::unordered_map<std::uint32_t, std::uint32_t> dense;
  for (std::uint32_t v = 0; v < labels.size(); ++v) {
    auto [it, _] = dense.try_emplace(sets.find(v), static_cast<std::uint32_t>(dense.size()));
    labels[v] = it->second;
  }
  if (count) *count = static_cast<std::uint32_t>(dense.size());
  return labels;
}

TriangleMesh filter_components(const TriangleMesh& mesh, double min_diameter) {
  if (min_diameter < 0) fail_usage("filter_components: min_diameter must be >= 0");
  if (min_diameter == 0 || mesh.triangles.empty()) return mesh;

  std::uint32_t count = 0;
  const auto labels = component_labels(mesh, &count);
  std::vector<Aabb> boxes(count, Aabb::empty());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) boxes[labels[v]].extend(mesh.vertices[v]);
  std::vector<double> diag(count);
  for (std::uint32_t c = 0; c < count; ++c) diag[c] = boxes[c].extent().norm();
  const auto largest = static_cast<std::uint32_t>(std::max_element(diag.begin(), diag.end()) - diag.begin());

  std::vector<bool> keep(count);
  for (std::uint32_t c = 0; c < count; ++c) keep[c] = c == largest || diag[c] >= min_diameter;

  TriangleMesh out;
  std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!keep[labels[v]]) continue;
    remap[v] = static_cast<std::int64_t>(out.vertices.size());
    out.vertices.push_back(mesh.vertices[v]);
  }
  for (const auto& t : mesh.triangles) {
    if (!keep[labels[t[0]]]) continue;
    out.triangles.push_back({static_cast<std::uint32_t>(remap[t[0]]), static_cast<std::uint32_t>(remap[t[1]]),
                             static_cast<std::uint32_t>(remap[t[2]])});
  }
  return out;
}

FeatureMesh attach_features(TriangleMesh mesh, int feature_dim, std::uint64_t seed) {
  if (feature_dim < 1) fail_usage("attach_features: feature dimension must be >= 1");
  FeatureMesh fm;
  fm.mesh = std::move(mesh);
  fm.feature_dim = feature_dim;
  fm.features.resize(fm.mesh.vertices.size() * static_cast<std::size_t>(feature_dim));
  Rng rng(seed);
  for (auto& f : fm.features) f = 0.1 * rng.normal();
  return fm;
}

double default_min_diameter(const DensityGrid& grid) { return 3.0 * grid.spacing().norm(); }

DuplexGeometry extract_duplex(const DensityGrid& grid, const std::vector<double>& thresholds,
                              double min_diameter, int feature_dim, std::uint64_t seed) {
  if (thresholds.empty()) fail_usage("extract_duplex: need at least one threshold");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1]))
      fail_usage("extract_duplex: thresholds must be strictly increasing");
  if (feature_dim < 1) fail_usage("extract_duplex: feature dimension must be >= 1");

  DuplexGeometry out;
  out.thresholds = thresholds;
  bool any = false;
  for (std::size_t l = 0; l < thresholds.size(); ++l) {
    TriangleMesh mesh = filter_components(marching_cubes(grid, thresholds[l]), min_diameter);
    any = any || !mesh.empty();
    out.layers.push_back(attach_features(std::move(mesh), feature_dim, mix_seed(seed, l)));
  }
  if (!any) fail_data("extract_duplex: every iso-level produced an empty mesh; scene not extractable");
  return out;
}

void perturb_vertices(DuplexGeometry& duplex, double amplitude, std::uint64_t seed) {
  if (amplitude <= 0) return;
  for (std::size_t l = 0; l < duplex.layers.size(); ++l) {
    Rng rng(mix_seed(seed, 1000 + l));
    for (auto& v : duplex.layers[l].mesh.vertices) {
      Vec3 d;
      do {
        d = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      } while (d.squaredNorm() > 1.0);
      v += amplitude * d;
    }
  }
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  try {
    auto out = fmt::output_file(path.string());
    out.print("# {} vertices, {} triangles\n", mesh.vertices.size(), mesh.triangles.size());
    for (const auto& v : mesh.vertices) out.print("v {:.9g} {:.9g} {:.9g}\n", v.x(), v.y(), v.z());
    for (const auto& t : mesh.triangles) out.print("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1);
  } catch (const std::system_error& e) {
    fail_data(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace duplex
