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

#include "duplex/raster.hpp"

#include <algorithm>
#include <numeric>

namespace duplex {

namespace {

constexpr double kDetEpsilon = 1e-9;
constexpr double kBaryEpsilon = 1e-10;
constexpr std::uint32_t kLeafSize = 4;

bool better(const Hit& h, const std::optional<Hit>& best) {
  return !best || h.t < best->t || (h.t == best->t && h.tri < best->tri);
}

// Slab test returning the entry distance, or +inf on a miss. NaNs from
// 0 * inf leave the running interval untouched, which keeps the test conservative.
double box_entry(const Aabb& box, const Vec3& origin, const Vec3& inv_dir, double t_near, double t_far) {
  double t0 = t_near, t1 = t_far;
  for (int a = 0; a < 3; ++a) {
    double ta = (box.lo[a] - origin[a]) * inv_dir[a];
    double tb = (box.hi[a] - origin[a]) * inv_dir[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) t0 = ta;
    if (tb < t1) t1 = tb;
  }
  // Relative slack so rounding never rejects a ray that grazes a box face.
  return t0 <= t1 + 1e-9 * (std::abs(t1) + 1.0) ? t0 : std::numeric_limits<double>::infinity();
}

}  // namespace

std::optional<Hit> intersect_triangle(const Vec3& v0, const Vec3& v1, const Vec3& v2,
                                      std::uint32_t tri, const Ray& ray) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 p = ray.direction.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < kDetEpsilon) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = ray.origin - v0;
  const double u = s.dot(p) * inv;
  if (u < -kBaryEpsilon || u > 1.0 + kBaryEpsilon) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = ray.direction.dot(q) * inv;
  if (v < -kBaryEpsilon || u + v > 1.0 + kBaryEpsilon) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (!(t >= ray.t_near && t <= ray.t_far)) return std::nullopt;
  Hit h;
  h.t = t;
  h.tri = tri;
  h.bary = {1.0 - u - v, u, v};
  return h;
}

std::optional<Hit> intersect_brute_force(const TriangleMesh& mesh, const Ray& ray) {
  std::optional<Hit> best;
  for (std::uint32_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    auto h = intersect_triangle(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]], i, ray);
    if (h && better(*h, best)) best = h;
  }
  return best;
}

// ---------------------------------------------------------------------------
// BVH

Bvh build_bvh(const TriangleMesh& mesh) {
  if (mesh.triangles.empty()) fail_usage("build_bvh: mesh has no triangles");
  const auto n = static_cast<std::uint32_t>(mesh.triangles.size());
  std::vector<Aabb> tri_box(n);
  std::vector<Vec3> centroid(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Aabb b = Aabb::empty();
    for (auto v : mesh.triangles[i]) b.extend(mesh.vertices[v]);
    tri_box[i] = b;
    centroid[i] = b.center();
  }

  Bvh bvh;
  bvh.order_.resize(n);
  std::iota(bvh.order_.begin(), bvh.order_.end(), 0u);
  bvh.nodes_.reserve(2 * (n / kLeafSize + 1));

  bvh.nodes_.emplace_back();
  // Build depth-first with the left child immediately after its parent.
  auto build = [&](auto&& self, std::uint32_t node, std::uint32_t begin, std::uint32_t end) -> void {
    Aabb box = Aabb::empty();
    Aabb cbox = Aabb::empty();
    for (std::uint32_t i = begin; i < end; ++i) {
      box.extend(tri_box[bvh.order_[i]]);
      cbox.extend(centroid[bvh.order_[i]]);
    }
    bvh.nodes_[node].box = box;
    if (end - begin <= kLeafSize) {
      bvh.nodes_[node].first = begin;
      bvh.nodes_[node].count = end - begin;
      return;
    }
    int axis = 0;
    const Vec3 ext = cbox.extent();
    if (ext.y() > ext[axis]) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(bvh.order_.begin() + begin, bvh.order_.begin() + mid, bvh.order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = centroid[a][axis], cb = centroid[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    const auto left = static_cast<std::uint32_t>(bvh.nodes_.size());
    bvh.nodes_.emplace_back();
    self(self, left, begin, mid);
    const auto right = static_cast<std::uint32_t>(bvh.nodes_.size());
    bvh.nodes_.emplace_back();
    self(self, right, mid, end);
    bvh.nodes_[node].first = right;
    bvh.nodes_[node].count = 0;
  };
  build(build, 0, 0, n);

  bvh.corners_.resize(3 * static_cast<std::size_t>(n));
  for (std::uint32_t s = 0; s < n; ++s)
    for (int c = 0; c < 3; ++c) bvh.corners_[3 * s + c] = mesh.vertices[mesh.triangles[bvh.order_[s]][c]];
  return bvh;
}

std::optional<Hit> Bvh::intersect(const Ray& ray) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv(1.0 / ray.direction.x(), 1.0 / ray.direction.y(), 1.0 / ray.direction.z());
  std::optional<Hit> best;
  double best_t = ray.t_far;

  std::uint32_t stack[96];
  int top = 0;
  // A missed box reports +inf, which must not pass against an unbounded best_t.
  auto worth_visiting = [&](double t_entry) { return t_entry < std::numeric_limits<double>::infinity() && t_entry <= best_t; };
  if (!worth_visiting(box_entry(nodes_[0].box, ray.origin, inv, ray.t_near, ray.t_far))) return std::nullopt;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.count > 0) {
      for (std::uint32_t s = node.first; s < node.first + node.count; ++s) {
        auto h = intersect_triangle(corners_[3 * s], corners_[3 * s + 1], corners_[3 * s + 2], order_[s], ray);
        if (h && better(*h, best)) {
          best = h;
          best_t = h->t;
        }
      }
      continue;
    }
    const std::uint32_t left = static_cast<std::uint32_t>(&node - nodes_.data()) + 1;
    const std::uint32_t right = node.first;
    const double tl = box_entry(nodes_[left].box, ray.origin, inv, ray.t_near, ray.t_far);
    const double tr = box_entry(nodes_[right].box, ray.origin, inv, ray.t_near, ray.t_far);
    // Equal entry distances must still be visited so ties resolve by index.
    const bool visit_l = worth_visiting(tl), visit_r = worth_visiting(tr);
    if (visit_l && visit_r) {
      // Push the farther child first so the nearer one is popped next.
      if (tl <= tr) {
        stack[top++] = right;
        stack[top++] = left;
      } else {
        stack[top++] = left;
        stack[top++] = right;
      }
    } else if (visit_l) {
      stack[top++] = left;
    } else if (visit_r) {
      stack[top++] = right;
    }
  }
  return best;
}

std::vector<Bvh> build_layer_bvhs(const DuplexGeometry& duplex) {
  std::vector<Bvh> out;
  for (const auto& layer : duplex.layers) out.push_back(layer.mesh.empty() ? Bvh() : build_bvh(layer.mesh));
  return out;
}

// ---------------------------------------------------------------------------
// G-buffer

bool GBuffer::all_miss(std::size_t i) const {
  for (const auto& l : layers)
    if (l.mask[i]) return false;
  return true;
}

GBuffer empty_gbuffer(const Camera& cam, std::size_t layer_count, int feature_dim) {
  GBuffer g;
  g.width = cam.width();
  g.height = cam.height();
  g.feature_dim = feature_dim;
  const std::size_t n = g.pixel_count();
  g.view_dir.resize(n);
  g.layers.resize(layer_count);
  for (auto& l : g.layers) {
    l.mask.assign(n, 0);
    l.position.assign(n, Vec3::Zero());
    l.bary.assign(n, {0, 0, 0});
    l.tri.assign(n, 0);
    l.depth.assign(n, std::numeric_limits<double>::infinity());
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) g.view_dir[static_cast<std::size_t>(y) * g.width + x] = ray_for_pixel(cam, x, y).direction;
  return g;
}

void record_hit(GBufferLayer& layer, std::size_t pixel, const TriangleMesh& mesh, const Hit& hit,
                const Camera& cam) {
  const auto& t = mesh.triangles[hit.tri];
  layer.mask[pixel] = 1;
  layer.bary[pixel] = hit.bary;
  layer.tri[pixel] = hit.tri;
  const Vec3 p = hit.bary[0] * mesh.vertices[t[0]] + hit.bary[1] * mesh.vertices[t[1]] +
                 hit.bary[2] * mesh.vertices[t[2]];
  layer.position[pixel] = p;
  layer.depth[pixel] = cam.rotation().row(2).dot(p.transpose()) + cam.translation().z();
}

GBuffer rasterize_geometry(const DuplexGeometry& duplex, const std::vector<Bvh>& bvhs, const Camera& cam) {
  if (bvhs.size() != duplex.layer_count()) fail_usage("rasterize: one BVH per layer required");
  GBuffer g = empty_gbuffer(cam, duplex.layer_count(), duplex.feature_dim());
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * g.width + x;
      const Ray ray = ray_for_pixel(cam, x, y);
      for (std::size_t l = 0; l < g.layers.size(); ++l) {
        const auto hit = bvhs[l].intersect(ray);
        if (hit) record_hit(g.layers[l], i, duplex.layers[l].mesh, *hit, cam);
      }
    }
  }
  return g;
}

void gather_features(GBuffer& g, const DuplexGeometry& duplex) {
  const int f = duplex.feature_dim();
  g.feature_dim = f;
  const std::size_t n = g.pixel_count();
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    auto& L = g.layers[l];
    const auto& fm = duplex.layers[l];
    L.features.assign(n * f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!L.mask[i]) continue;
      Hit h;
      h.tri = L.tri[i];
      h.bary = L.bary[i];
      interpolate_feature(fm, h, std::span<double>(L.features.data() + i * f, f));
    }
  }
}

GBuffer rasterize(const DuplexGeometry& duplex, const std::vector<Bvh>& bvhs, const Camera& cam) {
  GBuffer g = rasterize_geometry(duplex, bvhs, cam);
  gather_features(g, duplex);
  return g;
}

void interpolate_feature(const FeatureMesh& fm, const Hit& hit, std::span<double> out) {
  const auto& t = fm.mesh.triangles[hit.tri];
  const double* f0 = fm.feature(t[0]);
  const double* f1 = fm.feature(t[1]);
  const double* f2 = fm.feature(t[2]);
  for (int k = 0; k < fm.feature_dim; ++k)
    out[k] = hit.bary[0] * f0[k] + hit.bary[1] * f1[k] + hit.bary[2] * f2[k];
}

std::vector<double> interpolate_feature(const FeatureMesh& fm, const Hit& hit) {
  std::vector<double> out(fm.feature_dim);
  interpolate_feature(fm, hit, out);
  return out;
}

void scatter_feature_gradient(std::span<double> grad, const FeatureMesh& fm, const Hit& hit,
                              std::span<const double> upstream) {
  const auto& t = fm.mesh.triangles[hit.tri];
  const int f = fm.feature_dim;
  for (int c = 0; c < 3; ++c) {
    double* g = grad.data() + static_cast<std::size_t>(t[c]) * f;
    const double b = hit.bary[c];
    for (int k = 0; k < f; ++k) g[k] += b * upstream[k];
  }
}

}  // namespace duplex
