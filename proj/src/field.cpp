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

#include "duplex/field.hpp"

#include "duplex/binary_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstdio>

namespace duplex {

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail_data(fmt::format("{}: cannot open for reading", path.string()));
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) out.insert(out.end(), buf, buf + n);
  const bool err = std::ferror(f);
  std::fclose(f);
  if (err) fail_data(fmt::format("{}: read error", path.string()));
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail_data(fmt::format("{}: cannot open for writing", path.string()));
  const std::size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
  const bool ok = n == bytes.size() && std::fclose(f) == 0;
  if (!ok) fail_data(fmt::format("{}: write failed", path.string()));
}

// ---------------------------------------------------------------------------
// Rays

Ray make_ray(const Vec3& origin, const Vec3& direction, double t_near, double t_far) {
  if (!is_finite(origin) || !is_finite(direction)) fail_data("ray: non-finite origin or direction");
  if (std::abs(direction.norm() - 1.0) > 1e-9) fail_data("ray: direction is not unit length");
  if (!(t_near >= 0.0) || !(t_near < t_far)) fail_data("ray: require 0 <= t_near < t_far");
  return {origin, direction, t_near, t_far};
}

std::optional<Ray> clip_ray(const Ray& ray, const Aabb& box) {
  double t0 = ray.t_near;
  double t1 = ray.t_far;
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / ray.direction[a];
    double ta = (box.lo[a] - ray.origin[a]) * inv;
    double tb = (box.hi[a] - ray.origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    // NaN from 0 * inf (origin on a slab plane, parallel ray) keeps the old bound.
    if (ta > t0) t0 = ta;
    if (tb < t1) t1 = tb;
  }
  if (!(t0 < t1)) return std::nullopt;
  Ray out = ray;
  out.t_near = t0;
  out.t_far = t1;
  return out;
}

// ---------------------------------------------------------------------------
// DensityGrid

namespace {

constexpr char kGridMagic[] = "DXFGRID1";
constexpr std::size_t kGridMagicBytes = 16;

}  // namespace

DensityGrid::DensityGrid(std::array<int, 3> resolution, Aabb bounds, std::vector<float> values)
    : res_(resolution), bounds_(bounds), values_(std::move(values)) {
  // Bounds are stored as f32 in grid files; round here so a reload samples identically.
  for (int a = 0; a < 3; ++a) {
    bounds_.lo[a] = static_cast<float>(bounds_.lo[a]);
    bounds_.hi[a] = static_cast<float>(bounds_.hi[a]);
  }
  for (int r : res_)
    if (r < 2) fail_data("density grid: resolution must be >= 2 per axis");
  if (!bounds_.valid() || !((bounds_.hi - bounds_.lo).array() > 0).all())
    fail_data("density grid: bounds must have positive extent");
  const std::size_t n = static_cast<std::size_t>(res_[0]) * res_[1] * res_[2];
  if (values_.size() != n)
    fail_data(fmt::format("density grid: expected {} values, got {}", n, values_.size()));
  for (float v : values_)
    if (!std::isfinite(v) || v < 0.0f) fail_data("density grid: values must be finite and >= 0");
}

Vec3 DensityGrid::spacing() const {
  return bounds_.extent().cwiseQuotient(Vec3(res_[0] - 1, res_[1] - 1, res_[2] - 1));
}

Vec3 DensityGrid::lattice_point(int i, int j, int k) const {
  const Vec3 s = spacing();
  // Last lattice point lands exactly on the upper bound.
  auto coord = [&](int a, int idx) {
    return idx == res_[a] - 1 ? bounds_.hi[a] : bounds_.lo[a] + idx * s[a];
  };
  return {coord(0, i), coord(1, j), coord(2, k)};
}

double DensityGrid::sample(const Vec3& p) const {
  if (!is_finite(p)) fail_data("density grid: non-finite sample position");
  if (!bounds_.contains(p)) return 0.0;
  int i0[3];
  double fr[3];
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - bounds_.lo[a]) / (bounds_.hi[a] - bounds_.lo[a]) * (res_[a] - 1);
    int i = static_cast<int>(std::floor(u));
    i = std::clamp(i, 0, res_[a] - 2);
    i0[a] = i;
    fr[a] = std::clamp(u - i, 0.0, 1.0);
  }
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? fr[0] : 1.0 - fr[0]) * (dy ? fr[1] : 1.0 - fr[1]) *
                     (dz ? fr[2] : 1.0 - fr[2]);
    if (w != 0.0) acc += w * at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
  }
  return acc;
}

void DensityGrid::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.fixed_string(kGridMagic, kGridMagicBytes);
  for (int r : res_) w.u32(static_cast<std::uint32_t>(r));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(bounds_.lo[a]));
  for (int a = 0; a < 3; ++a) w.f32(static_cast<float>(bounds_.hi[a]));
  for (float v : values_) w.f32(v);
  write_file(path, w.bytes());
}

DensityGrid DensityGrid::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, path.string());
  if (r.fixed_string(kGridMagicBytes) != kGridMagic)
    fail_data(path.string() + ": not a density grid (bad magic)");
  std::array<int, 3> res{};
  for (auto& v : res) {
    const auto x = r.u32();
    if (x < 2 || x > 4096) fail_data(path.string() + ": implausible grid resolution");
    v = static_cast<int>(x);
  }
  Aabb b;
  for (int a = 0; a < 3; ++a) b.lo[a] = r.f32();
  for (int a = 0; a < 3; ++a) b.hi[a] = r.f32();
  const std::size_t n = static_cast<std::size_t>(res[0]) * res[1] * res[2];
  if (r.remaining() != n * 4) fail_data(path.string() + ": value count does not match resolution");
  std::vector<float> values(n);
  for (auto& v : values) v = r.f32();
  return DensityGrid(res, b, std::move(values));
}

std::uint64_t DensityGrid::content_hash() const {
  Fnv1a h;
  h.str("grid");
  for (int r : res_) h.pod(r);
  for (int a = 0; a < 3; ++a) h.pod(bounds_.lo[a]).pod(bounds_.hi[a]);
  h.bytes(values_.data(), values_.size() * sizeof(float));
  return h.value();
}

// ---------------------------------------------------------------------------
// VolumetricField

struct FieldAccess {
  static const VolumetricField::DensityFn& density(const VolumetricField& f) { return f.density_; }
  static const VolumetricField::RadianceFn& radiance(const VolumetricField& f) { return f.radiance_; }
};

VolumetricField::VolumetricField(std::string kind, Aabb bounds, DensityFn density,
                                 RadianceFn radiance, double scene_radius, std::uint64_t hash)
    : kind_(std::move(kind)),
      bounds_(bounds),
      density_(std::move(density)),
      radiance_(std::move(radiance)),
      scene_radius_(scene_radius),
      hash_(hash) {}

double VolumetricField::sample_density(const Vec3& p) const {
  if (!is_finite(p)) fail_data("sample_density: non-finite position");
  if (!bounds_.contains(p)) return 0.0;
  return std::max(0.0, density_(p));
}

Vec3 VolumetricField::sample_radiance(const Vec3& p, const Vec3& d) const {
  if (!is_finite(p) || !is_finite(d)) fail_data("sample_radiance: non-finite input");
  if (std::abs(d.norm() - 1.0) > 1e-6) fail_data("sample_radiance: direction is not unit length");
  if (!bounds_.contains(p)) return Vec3::Zero();
  return radiance_(p, d).cwiseMax(0.0).cwiseMin(1.0);
}

namespace {

Vec3 clamp01(const Vec3& c) { return c.cwiseMax(0.0).cwiseMin(1.0); }

Vec3 unit_or_z(const Vec3& p) {
  const double n = p.norm();
  return n > 1e-300 ? Vec3(p / n) : Vec3(0, 0, 1);
}

std::uint64_t scene_hash(std::string_view name) {
  // Bump the suffix whenever a closed form below changes.
  return Fnv1a().str("procedural-scene/v1/").str(name).value();
}

// Textured sphere: sigma = 4 inside radius 0.5, view-independent colour that
// depends on the direction from the origin only.
VolumetricField textured_sphere() {
  auto density = [](const Vec3& p) { return p.squaredNorm() < 0.25 ? 4.0 : 0.0; };
  auto radiance = [](const Vec3& p, const Vec3&) {
    const Vec3 n = unit_or_z(p);
    return clamp01(Vec3(0.55 + 0.35 * std::sin(5.0 * n.x() + 1.0),
                        0.50 + 0.30 * std::sin(4.0 * n.y() - 0.5) * std::cos(3.0 * n.z()),
                        0.45 + 0.35 * std::cos(6.0 * n.z() + n.x())));
  };
  return {"textured_sphere", Aabb::cube(1.0), density, radiance, 0.5, scene_hash("textured_sphere")};
}

// Glossy sphere. Density is an exponential tail around radius R:
//   sigma(r) = min(cap, exp((R - r) / w) / w)   for r <= r_cut, else 0,
// so the optical depth from infinity down to radius r is sigma(r) * w and a
// central ray reaches depth 1 exactly at r = R. The scale is chosen so that
// sigma(R) = 1/w sits between the default iso-levels 1e-4 and 1e-2: the 1e-4
// shell lies outside the visible surface and the 1e-2 shell inside it.
// Radiance mixes a smooth base colour with a lobe around a fixed axis:
//   c = (1 - s) * base(n) + s * lobe,  s = max(0, d . axis)^k.
VolumetricField glossy_sphere() {
  using namespace glossy;
  const double r_cut = kRadius + kFalloff * std::log(1.0 / (kFalloff * kCutoffDensity));
  auto density = [r_cut](const Vec3& p) {
    const double r = p.norm();
    if (r > r_cut) return 0.0;
    return std::min(kDensityCap, std::exp((kRadius - r) / kFalloff) / kFalloff);
  };
  auto radiance = [](const Vec3& p, const Vec3& d) {
    const double s = std::pow(std::max(0.0, d.dot(kLobeAxis)), kLobeExponent);
    return clamp01((1.0 - s) * base_color(unit_or_z(p)) + s * kLobeColor);
  };
  return {"glossy_sphere", Aabb::cube(14000.0), density, radiance, kRadius,
          scene_hash("glossy_sphere")};
}

// Two overlapping Gaussian lobes (non-convex union), colour blended by lobe
// weight plus a faint white highlight around a fixed axis.
VolumetricField two_lobe_blob() {
  const Vec3 c1(-0.35, 0.0, 0.0), c2(0.35, 0.05, 0.0);
  constexpr double s2 = 2.0 * 0.22 * 0.22;
  constexpr double amp = 40.0;
  auto density = [=](const Vec3& p) {
    return amp * (std::exp(-(p - c1).squaredNorm() / s2) + std::exp(-(p - c2).squaredNorm() / s2));
  };
  auto radiance = [=](const Vec3& p, const Vec3& d) {
    const double g1 = std::exp(-(p - c1).squaredNorm() / s2);
    const double g2 = std::exp(-(p - c2).squaredNorm() / s2);
    const double w = g1 / (g1 + g2 + 1e-300);
    const Vec3 base = w * Vec3(0.85, 0.35, 0.25) + (1.0 - w) * Vec3(0.25, 0.45, 0.85);
    const double s = 0.3 * std::pow(std::max(0.0, d.dot(Vec3(0, 0, -1))), 8.0);
    return clamp01((1.0 - s) * base + s * Vec3(1, 1, 1));
  };
  return {"two_lobe_blob", Aabb::cube(1.2), density, radiance, 0.6, scene_hash("two_lobe_blob")};
}

// Thin spherical shell of radius 0.6: a central ray crosses it twice, so every
// iso-level yields two nested sheets.
VolumetricField thin_shell() {
  constexpr double radius = 0.6, half_width = 0.04, amp = 60.0;
  auto density = [=](const Vec3& p) {
    const double x = (p.norm() - radius) / half_width;
    return amp * std::exp(-x * x);
  };
  auto radiance = [](const Vec3& p, const Vec3& d) {
    const Vec3 n = unit_or_z(p);
    const double s = 0.25 * std::pow(std::max(0.0, -d.dot(n)), 4.0);
    return clamp01(Vec3(0.5 + 0.4 * n.x(), 0.5 + 0.4 * n.y(), 0.5 + 0.4 * n.z()) + Vec3::Constant(s));
  };
  return {"thin_shell", Aabb::cube(1.0), density, radiance, 0.6, scene_hash("thin_shell")};
}

}  // namespace

Vec3 glossy::base_color(const Vec3& n) {
  return clamp01(Vec3(0.55 + 0.25 * n.x() + 0.12 * std::sin(4.0 * n.y() + 0.3),
                      0.40 + 0.22 * n.z() + 0.12 * std::cos(3.5 * n.x() - 0.2),
                      0.50 - 0.22 * n.y() + 0.12 * std::sin(3.0 * n.z() + 1.0)));
}

const std::vector<std::string>& scene_names() {
  static const std::vector<std::string> names = {"textured_sphere", "glossy_sphere",
                                                 "two_lobe_blob", "thin_shell"};
  return names;
}

SceneId scene_from_name(const std::string& name) {
  if (name == "textured_sphere") return SceneId::kTexturedSphere;
  if (name == "glossy_sphere") return SceneId::kGlossySphere;
  if (name == "two_lobe_blob") return SceneId::kTwoLobeBlob;
  if (name == "thin_shell") return SceneId::kThinShell;
  fail_usage("unknown scene '" + name + "'");
}

std::string scene_name(SceneId id) { return scene_names()[static_cast<int>(id)]; }

VolumetricField make_scene(SceneId id) {
  switch (id) {
    case SceneId::kTexturedSphere: return textured_sphere();
    case SceneId::kGlossySphere: return glossy_sphere();
    case SceneId::kTwoLobeBlob: return two_lobe_blob();
    case SceneId::kThinShell: return thin_shell();
  }
  fail_usage("unknown scene id");
}

VolumetricField make_constant_field(double sigma, const Vec3& color, const Aabb& bounds) {
  Fnv1a h;
  h.str("constant").pod(sigma).pod(color.x()).pod(color.y()).pod(color.z());
  return {"constant", bounds, [sigma](const Vec3&) { return sigma; },
          [color](const Vec3&, const Vec3&) { return color; }, bounds.extent().norm() * 0.5,
          h.value()};
}

VolumetricField make_vacuum_field(const Aabb& bounds) {
  return make_constant_field(0.0, Vec3::Zero(), bounds);
}

VolumetricField make_radial_ramp_field(const Aabb& bounds) {
  return {"radial_ramp", bounds, [](const Vec3& p) { return std::max(0.0, 1.0 - p.norm()); },
          [](const Vec3&, const Vec3&) { return Vec3(0.6, 0.6, 0.6); }, 0.5,
          Fnv1a().str("radial_ramp").value()};
}

VolumetricField make_grid_field(DensityGrid grid, VolumetricField::RadianceFn radiance,
                                double scene_radius) {
  const Aabb bounds = grid.bounds();
  const std::uint64_t hash = grid.content_hash();
  auto shared = std::make_shared<const DensityGrid>(std::move(grid));
  return {"grid", bounds, [shared](const Vec3& p) { return shared->sample(p); },
          std::move(radiance), scene_radius, hash};
}

// ---------------------------------------------------------------------------
// Volume rendering

namespace {
// Samples below this weight change a colour channel by less than 1e-9 in total.
constexpr double kNegligibleWeight = 1e-13;
// Remaining samples could move the colour by at most this much.
constexpr double kOpaqueTransmittance = 1e-12;
}  // namespace

RenderSample volume_render(const VolumetricField& field, const Ray& ray, int n_steps) {
  if (n_steps < 1) fail_usage("volume_render: n_steps must be >= 1");
  if (!(ray.t_near < ray.t_far) || !std::isfinite(ray.t_far))
    fail_data("volume_render: ray needs a finite, non-empty [t_near, t_far]");
  const auto& density = FieldAccess::density(field);
  const auto& radiance = FieldAccess::radiance(field);
  const Aabb& bounds = field.bounds();

  const double delta = (ray.t_far - ray.t_near) / n_steps;
  RenderSample out;
  double transmittance = 1.0;
  for (int i = 0; i < n_steps; ++i) {
    const Vec3 p = ray.at(ray.t_near + (i + 0.5) * delta);
    if (!bounds.contains(p)) continue;
    const double sigma = std::max(0.0, density(p));
    if (sigma == 0.0) continue;
    const double keep = std::exp(-sigma * delta);
    const double weight = transmittance * (1.0 - keep);
    if (weight > kNegligibleWeight)
      out.color += weight * radiance(p, ray.direction).cwiseMax(0.0).cwiseMin(1.0);
    out.weight_sum += weight;
    transmittance *= keep;
    if (transmittance < kOpaqueTransmittance) break;
  }
  out.transmittance = transmittance;
  return out;
}

DensityGrid bake_grid(const VolumetricField& field, std::array<int, 3> resolution) {
  for (int r : resolution)
    if (r < 2) fail_usage("bake_grid: resolution must be >= 2 per axis");
  // Reuse the grid's lattice convention by building a placeholder first.
  const std::size_t n = static_cast<std::size_t>(resolution[0]) * resolution[1] * resolution[2];
  DensityGrid lattice(resolution, field.bounds(), std::vector<float>(n, 0.0f));
  std::vector<float> values(n);
#pragma omp parallel for schedule(static)
  for (int k = 0; k < resolution[2]; ++k)
    for (int j = 0; j < resolution[1]; ++j)
      for (int i = 0; i < resolution[0]; ++i)
        values[(static_cast<std::size_t>(k) * resolution[1] + j) * resolution[0] + i] =
            static_cast<float>(field.sample_density(lattice.lattice_point(i, j, k)));
  return DensityGrid(resolution, field.bounds(), std::move(values));
}

}  // namespace duplex
