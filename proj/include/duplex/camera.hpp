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

// Pinhole cameras, pixel rays, and the spherical distillation-pose sampler.

#ifndef DUPLEX_CAMERA_HPP
#define DUPLEX_CAMERA_HPP

#include "duplex/field.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace duplex {

struct Intrinsics {
  double fx = 1, fy = 1, cx = 0.5, cy = 0.5;
  int width = 1, height = 1;
};

/// World-to-camera pose (camera x right, y down, z forward) plus intrinsics.
/// Pixel (px, py) covers [px, px+1) x [py, py+1); its centre is (px+0.5, py+0.5).
class Camera {
 public:
  Camera(const Intrinsics& k, const Mat3& rotation, const Vec3& translation);

  const Intrinsics& intrinsics() const { return k_; }
  const Mat3& rotation() const { return r_; }
  const Vec3& translation() const { return t_; }
  int width() const { return k_.width; }
  int height() const { return k_.height; }

  /// Camera centre in world coordinates, -R^T t.
  Vec3 center() const { return -r_.transpose() * t_; }
  /// Optical axis in world coordinates.
  Vec3 forward() const { return r_.row(2).transpose(); }

 private:
  Intrinsics k_;
  Mat3 r_;
  Vec3 t_;
};

struct Projection {
  double u, v, z;
};

/// Ray through the pixel centre, t in [0, inf).
Ray ray_for_pixel(const Camera& cam, int px, int py);
/// Same ray clipped to `bounds`; nullopt when it misses them.
std::optional<Ray> ray_for_pixel(const Camera& cam, int px, int py, const Aabb& bounds);

/// (fx qx/qz + cx, fy qy/qz + cy, qz) with q = R p + t. Throws when qz <= 1e-9.
Projection project(const Camera& cam, const Vec3& p);

struct Spherical {
  double r, theta, phi;  // theta: polar angle from +z; phi: azimuth from +x
};

Spherical camera_to_spherical(const Camera& cam);
Spherical to_spherical(const Vec3& p);
Vec3 from_spherical(const Spherical& s);
/// Look-at-origin camera with canonical roll (world +z up, +x fallback near the poles).
Camera spherical_to_camera(const Spherical& s, const Intrinsics& k);
Camera look_at_origin(const Vec3& center, const Intrinsics& k);

struct PoseBounds {
  double r_min, r_max;
  double theta_min, theta_max;
  double phi_min, phi_max;  // may extend past pi after unwrapping

  bool contains(const Spherical& s, double tol = 1e-9) const;
};

/// Per-coordinate bounds of the camera centres; azimuth on its minimal arc.
PoseBounds pose_bounds(const std::vector<Camera>& cams);

std::vector<Camera> sample_distillation_poses(const std::vector<Camera>& train_cams, int count,
                                              std::uint64_t seed);

/// Intrinsics for a horizontal field of view (fx = fy = 0.5 w / tan(0.5 fov)).
Intrinsics intrinsics_from_fov(double camera_angle_x, int width, int height);

/// Cameras at uniformly random spherical coordinates inside `bounds`, all looking at the origin.
std::vector<Camera> random_orbit_cameras(const PoseBounds& bounds, int count, const Intrinsics& k,
                                         std::uint64_t seed);

/// Circle of cameras at fixed radius and elevation (polar angle measured from +z).
std::vector<Camera> orbit_path(double radius, double theta, int n_frames, const Intrinsics& k);

struct CameraManifest {
  std::vector<Camera> cameras;
  std::vector<std::string> file_paths;
  std::string scene_hash;  // empty when absent
};

/// Reads the synthetic-dataset transforms format (camera_angle_x + frames of
/// camera-to-world 4x4 matrices in the OpenGL camera convention). `w`/`h`
/// fields are honoured when present, otherwise the given defaults apply.
CameraManifest load_transforms_manifest(const std::filesystem::path& path, int default_width = 800,
                                        int default_height = 800);
void save_transforms_manifest(const CameraManifest& manifest, const std::filesystem::path& path);

}  // namespace duplex

#endif  // DUPLEX_CAMERA_HPP
