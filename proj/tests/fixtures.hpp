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


// Small scenes and models shared by the unit tests.

#ifndef DUPLEX_TESTS_FIXTURES_HPP
#define DUPLEX_TESTS_FIXTURES_HPP

#include "duplex/camera.hpp"
#include "duplex/geometry.hpp"
#include "duplex/render.hpp"

#include <filesystem>
#include <string>

namespace duplex::testing {

/// Two nested spheres from the radial ramp (iso 0.3 outside, 0.6 inside).
inline DuplexGeometry ramp_duplex(int resolution = 12, int feature_dim = 8, std::uint64_t seed = 7) {
  const DensityGrid grid = bake_grid(make_radial_ramp_field(Aabb::cube(1.0)), {resolution, resolution, resolution});
  return extract_duplex(grid, {0.3, 0.6}, 0.0, feature_dim, seed);
}

inline Intrinsics small_intrinsics(int size) { return intrinsics_from_fov(0.9, size, size); }

inline Camera front_camera(int size, const Vec3& center = Vec3(0.4, -0.3, 2.2)) {
  return look_at_origin(center, small_intrinsics(size));
}

inline DuplexModel ramp_model(const std::string& preset = "compact", int kernel_override = 0, int resolution = 12,
                              std::uint64_t seed = 11) {
  const NetArchitecture arch = preset_architecture(preset, kernel_override);
  DuplexModel m;
  m.geometry = ramp_duplex(resolution, arch.feature_dim, seed);
  m.net = init_net(arch, make_layout(arch, m.geometry.layer_count(), Aabb::cube(1.0)), seed + 1);
  m.background = Vec3(1.0, 1.0, 1.0);
  return m;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("duplex_tests_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace duplex::testing

#endif  // DUPLEX_TESTS_FIXTURES_HPP
