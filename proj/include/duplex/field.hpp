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

// Teacher volumetric fields and the volume-rendering oracle.

#ifndef DUPLEX_FIELD_HPP
#define DUPLEX_FIELD_HPP

#include "duplex/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace duplex {

struct Ray {
  Vec3 origin{0, 0, 0};
  Vec3 direction{0, 0, 1};
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Validates the ray invariants (unit direction, 0 <= t_near < t_far).
Ray make_ray(const Vec3& origin, const Vec3& direction, double t_near, double t_far);

/// Restricts the ray to the part inside `box`; nullopt when it misses.
std::optional<Ray> clip_ray(const Ray& ray, const Aabb& box);

/// Vertex-centred scalar lattice over an axis-aligned box.
class DensityGrid {
 public:
  DensityGrid() = default;
  DensityGrid(std::array<int, 3> resolution, Aabb bounds, std::vector<float> values);

  const std::array<int, 3>& resolution() const { return res_; }
  const Aabb& bounds() const { return bounds_; }
  const std::vector<float>& values() const { return values_; }

  float at(int i, int j, int k) const {
    return values_[(static_cast<std::size_t>(k) * res_[1] + j) * res_[0] + i];
  }
  Vec3 lattice_point(int i, int j, int k) const;
  /// Spacing between neighbouring lattice points along each axis.
  Vec3 spacing() const;

  /// Trilinear interpolation; 0 outside the bounds.
  double sample(const Vec3& p) const;

  void save(const std::filesystem::path& path) const;
  static DensityGrid load(const std::filesystem::path& path);

  std::uint64_t content_hash() const;

 private:
  std::array<int, 3> res_{0, 0, 0};
  Aabb bounds_;
  std::vector<float> values_;
};

/// Immutable teacher field: position -> density, (position, direction) -> RGB.
class VolumetricField {
 public:
  using DensityFn = std::function<double(const Vec3&)>;
  using RadianceFn = std::function<Vec3(const Vec3&, const Vec3&)>;

  VolumetricField(std::string kind, Aabb bounds, DensityFn density, RadianceFn radiance,
                  double scene_radius, std::uint64_t hash);

  const std::string& kind() const { return kind_; }
  const Aabb& bounds() const { return bounds_; }
  /// Nominal radius of the scene content, used to place cameras.
  double scene_radius() const { return scene_radius_; }
  std::uint64_t hash() const { return hash_; }

  /// sigma >= 0; zero outside the bounds. Throws on non-finite input.
  double sample_density(const Vec3& p) const;
  /// RGB in [0,1]^3; black outside the bounds. Throws on non-unit direction.
  Vec3 sample_radiance(const Vec3& p, const Vec3& d) const;

 private:
  friend struct FieldAccess;
  std::string kind_;
  Aabb bounds_;
  DensityFn density_;
  RadianceFn radiance_;
  double scene_radius_;
  std::uint64_t hash_;
};

enum class SceneId { kTexturedSphere, kGlossySphere, kTwoLobeBlob, kThinShell };

SceneId scene_from_name(const std::string& name);
std::string scene_name(SceneId id);
const std::vector<std::string>& scene_names();

/// The four procedural teachers. Closed forms are documented in field.cpp.
VolumetricField make_scene(SceneId id);

// Glossy sphere constants, exposed for tests.
namespace glossy {
inline constexpr double kRadius = 12000.0;    // optical depth 1 along a central ray
inline constexpr double kFalloff = 300.0;     // e-folding length of the density tail
inline constexpr double kDensityCap = 1.0;
inline constexpr double kCutoffDensity = 1e-5;
inline constexpr double kLobeExponent = 6.0;
inline const Vec3 kLobeAxis = Vec3(0.3, 0.5, -0.812404).normalized();
inline const Vec3 kLobeColor = Vec3(1.0, 0.93, 0.75);
Vec3 base_color(const Vec3& unit_normal);
}  // namespace glossy

// Generic analytic fields, mostly for tests and tooling.
VolumetricField make_constant_field(double sigma, const Vec3& color, const Aabb& bounds);
VolumetricField make_vacuum_field(const Aabb& bounds);
/// sigma(p) = max(0, 1 - |p|) with view-independent grey radiance.
VolumetricField make_radial_ramp_field(const Aabb& bounds);
/// Field backed by a density grid; radiance supplied separately.
VolumetricField make_grid_field(DensityGrid grid, VolumetricField::RadianceFn radiance,
                                double scene_radius);

struct RenderSample {
  Vec3 color{0, 0, 0};        // sum of T_i alpha_i c_i, before background
  double transmittance = 1.0;  // T after the last step
  double weight_sum = 0.0;     // sum of T_i alpha_i

  Vec3 composite(const Vec3& background) const { return color + transmittance * background; }
};

/// Midpoint quadrature over [t_near, t_far] with n_steps equal intervals.
RenderSample volume_render(const VolumetricField& field, const Ray& ray, int n_steps);

/// Samples density at every lattice point of a vertex-centred grid over the field bounds.
DensityGrid bake_grid(const VolumetricField& field, std::array<int, 3> resolution);

}  // namespace duplex

#endif  // DUPLEX_FIELD_HPP
