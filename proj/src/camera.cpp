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

#include "duplex/camera.hpp"

#include <Eigen/SVD>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace duplex {

using nlohmann::json;

Camera::Camera(const Intrinsics& k, const Mat3& rotation, const Vec3& translation)
    : k_(k), r_(rotation), t_(translation) {
  if (k.width < 1 || k.height < 1) fail_data("camera: image size must be positive");
  if (!(k.fx > 0 && k.fy > 0)) fail_data("camera: focal lengths must be positive");
  if (!(k.cx > 0 && k.cx < k.width && k.cy > 0 && k.cy < k.height))
    fail_data("camera: principal point must lie inside the image");
  if ((r_.transpose() * r_ - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-8 ||
      std::abs(r_.determinant() - 1.0) > 1e-8)
    fail_data("camera: rotation is not a proper orthonormal matrix");
  if (!is_finite(t_)) fail_data("camera: non-finite translation");
}

Ray ray_for_pixel(const Camera& cam, int px, int py) {
  if (px < 0 || py < 0 || px >= cam.width() || py >= cam.height())
    fail_usage(fmt::format("ray_for_pixel: pixel ({}, {}) outside {}x{}", px, py, cam.width(), cam.height()));
  const auto& k = cam.intrinsics();
  const Vec3 dir_cam((px + 0.5 - k.cx) / k.fx, (py + 0.5 - k.cy) / k.fy, 1.0);
  Ray ray;
  ray.origin = cam.center();
  ray.direction = (cam.rotation().transpose() * dir_cam).normalized();
  ray.t_near = 0.0;
  ray.t_far = std::numeric_limits<double>::infinity();
  return ray;
}

std::optional<Ray> ray_for_pixel(const Camera& cam, int px, int py, const Aabb& bounds) {
  return clip_ray(ray_for_pixel(cam, px, py), bounds);
}

Projection project(const Camera& cam, const Vec3& p) {
  const Vec3 q = cam.rotation() * p + cam.translation();
  if (q.z() <= 1e-9) fail_data("project: point is behind the camera");
  const auto& k = cam.intrinsics();
  return {k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy, q.z()};
}

Spherical to_spherical(const Vec3& p) {
  const double r = p.norm();
  if (!(r > 0)) fail_data("spherical coordinates undefined at the origin");
  return {r, std::acos(std::clamp(p.z() / r, -1.0, 1.0)), std::atan2(p.y(), p.x())};
}

Vec3 from_spherical(const Spherical& s) {
  const double st = std::sin(s.theta);
  return s.r * Vec3(st * std::cos(s.phi), st * std::sin(s.phi), std::cos(s.theta));
}

Spherical camera_to_spherical(const Camera& cam) {
  const Vec3 c = cam.center();
  if (c.norm() < 1e-12) fail_data("camera_to_spherical: camera centre is at the origin");
  return to_spherical(c);
}

Camera look_at_origin(const Vec3& center, const Intrinsics& k) {
  if (center.norm() < 1e-12) fail_data("look_at_origin: camera centre is at the origin");
  const Vec3 forward = -center.normalized();
  Vec3 up(0, 0, 1);
  if (std::abs(forward.dot(up)) > 0.999) up = Vec3(1, 0, 0);
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 true_up = right.cross(forward);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = -true_up.transpose();
  r.row(2) = forward.transpose();
  return Camera(k, r, -r * center);
}

Camera spherical_to_camera(const Spherical& s, const Intrinsics& k) {
  return look_at_origin(from_spherical(s), k);
}

bool PoseBounds::contains(const Spherical& s, double tol) const {
  if (s.r < r_min - tol || s.r > r_max + tol) return false;
  if (s.theta < theta_min - tol || s.theta > theta_max + tol) return false;
  double phi = s.phi;
  while (phi < phi_min - tol) phi += 2 * M_PI;
  while (phi > phi_max + tol) phi -= 2 * M_PI;
  return phi >= phi_min - tol && phi <= phi_max + tol;
}

PoseBounds pose_bounds(const std::vector<Camera>& cams) {
  if (cams.empty()) fail_usage("pose_bounds: no cameras");
  PoseBounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
               std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
               0, 0};
  std::vector<double> phis;
  for (const auto& c : cams) {
    const Spherical s = camera_to_spherical(c);
    b.r_min = std::min(b.r_min, s.r);
    b.r_max = std::max(b.r_max, s.r);
    b.theta_min = std::min(b.theta_min, s.theta);
    b.theta_max = std::max(b.theta_max, s.theta);
    phis.push_back(s.phi);
  }
  std::sort(phis.begin(), phis.end());
  b.phi_min = phis.front();
  b.phi_max = phis.back();
  if (b.phi_max - b.phi_min > M_PI) {
    // Azimuth is periodic: the minimal covering arc is the complement of the
    // largest gap between neighbouring values on the circle.
    std::size_t gap_after = phis.size() - 1;  // wrap-around gap
    double largest = phis.front() + 2 * M_PI - phis.back();
    for (std::size_t i = 0; i + 1 < phis.size(); ++i) {
      const double g = phis[i + 1] - phis[i];
      if (g > largest) {
        largest = g;
        gap_after = i;
      }
    }
    if (gap_after != phis.size() - 1) {
      b.phi_min = phis[gap_after + 1];
      b.phi_max = phis[gap_after] + 2 * M_PI;
    }
  }
  return b;
}

std::vector<Camera> sample_distillation_poses(const std::vector<Camera>& train_cams, int count,
                                              std::uint64_t seed) {
  if (train_cams.empty()) fail_usage("sample_distillation_poses: no training cameras");
  if (count < 0) fail_usage("sample_distillation_poses: count must be >= 0");
  const PoseBounds b = pose_bounds(train_cams);
  return random_orbit_cameras(b, count, train_cams.front().intrinsics(), seed);
}

std::vector<Camera> random_orbit_cameras(const PoseBounds& b, int count, const Intrinsics& k,
                                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Camera> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Spherical s;
    s.r = rng.uniform(b.r_min, b.r_max);
    s.theta = rng.uniform(b.theta_min, b.theta_max);
    s.phi = rng.uniform(b.phi_min, b.phi_max);
    out.push_back(spherical_to_camera(s, k));
  }
  return out;
}

std::vector<Camera> orbit_path(double radius, double theta, int n_frames, const Intrinsics& k) {
  if (n_frames < 1) fail_usage("orbit: need at least one frame");
  std::vector<Camera> out;
  for (int i = 0; i < n_frames; ++i)
    out.push_back(spherical_to_camera({radius, theta, 2 * M_PI * i / n_frames}, k));
  return out;
}

Intrinsics intrinsics_from_fov(double camera_angle_x, int width, int height) {
  if (!(camera_angle_x > 0 && camera_angle_x < M_PI)) fail_data("camera_angle_x must lie in (0, pi)");
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = k.fy = 0.5 * width / std::tan(0.5 * camera_angle_x);
  k.cx = 0.5 * width;
  k.cy = 0.5 * height;
  return k;
}

CameraManifest load_transforms_manifest(const std::filesystem::path& path, int default_width,
                                        int default_height) {
  std::ifstream in(path);
  if (!in) fail_data(path.string() + ": cannot open camera manifest");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail_data(fmt::format("{}: malformed JSON: {}", path.string(), e.what()));
  }
  auto bad = [&](const std::string& why) { fail_data(fmt::format("{}: {}", path.string(), why)); };
  if (!doc.is_object()) bad("top level must be an object");
  if (!doc.contains("camera_angle_x") || !doc["camera_angle_x"].is_number()) bad("missing numeric camera_angle_x");
  if (!doc.contains("frames") || !doc["frames"].is_array()) bad("missing frames array");
  const int w = doc.contains("w") ? doc["w"].get<int>() : default_width;
  const int h = doc.contains("h") ? doc["h"].get<int>() : default_height;
  const Intrinsics k = intrinsics_from_fov(doc["camera_angle_x"].get<double>(), w, h);

  CameraManifest out;
  if (doc.contains("scene_hash") && doc["scene_hash"].is_string()) out.scene_hash = doc["scene_hash"];
  std::size_t idx = 0;
  for (const auto& frame : doc["frames"]) {
    const std::string where = fmt::format("frame {}", idx++);
    if (!frame.is_object() || !frame.contains("transform_matrix")) bad(where + ": missing transform_matrix");
    const auto& m = frame["transform_matrix"];
    if (!m.is_array() || m.size() != 4) bad(where + ": transform_matrix must be 4x4");
    Eigen::Matrix4d c2w;
    for (int r = 0; r < 4; ++r) {
      if (!m[r].is_array() || m[r].size() != 4) bad(where + ": transform_matrix must be 4x4");
      for (int c = 0; c < 4; ++c) {
        if (!m[r][c].is_number()) bad(where + ": non-numeric matrix entry");
        c2w(r, c) = m[r][c].get<double>();
      }
    }
    const Mat3 rot = c2w.block<3, 3>(0, 0);
    if (std::abs(rot.determinant()) < 1e-6) bad(where + ": transform_matrix is not invertible");
    // Snap to the nearest rotation; stored matrices are only float-accurate.
    Eigen::JacobiSVD<Mat3> svd(rot, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 c2w_rot = svd.matrixU() * svd.matrixV().transpose();
    if (c2w_rot.determinant() < 0) bad(where + ": transform_matrix contains a reflection");
    const Vec3 center = c2w.block<3, 1>(0, 3);
    // OpenGL camera axes (x right, y up, z back) -> ours (x right, y down, z forward).
    Mat3 w2c;
    w2c.row(0) = c2w_rot.col(0).transpose();
    w2c.row(1) = -c2w_rot.col(1).transpose();
    w2c.row(2) = -c2w_rot.col(2).transpose();
    out.cameras.emplace_back(k, w2c, -w2c * center);
    out.file_paths.push_back(frame.contains("file_path") && frame["file_path"].is_string()
                                 ? frame["file_path"].get<std::string>()
                                 : std::string());
  }
  return out;
}

void save_transforms_manifest(const CameraManifest& manifest, const std::filesystem::path& path) {
  if (manifest.cameras.empty()) fail_usage("camera manifest: no cameras to write");
  const auto& k = manifest.cameras.front().intrinsics();
  json doc;
  doc["camera_angle_x"] = 2.0 * std::atan(0.5 * k.width / k.fx);
  doc["w"] = k.width;
  doc["h"] = k.height;
  if (!manifest.scene_hash.empty()) doc["scene_hash"] = manifest.scene_hash;
  json frames = json::array();
  for (std::size_t i = 0; i < manifest.cameras.size(); ++i) {
    const auto& cam = manifest.cameras[i];
    const Mat3 w2c = cam.rotation();
    Mat3 c2w_rot;
    c2w_rot.col(0) = w2c.row(0).transpose();
    c2w_rot.col(1) = -w2c.row(1).transpose();
    c2w_rot.col(2) = -w2c.row(2).transpose();
    const Vec3 c = cam.center();
    json m = json::array();
    for (int r = 0; r < 3; ++r) m.push_back({c2w_rot(r, 0), c2w_rot(r, 1), c2w_rot(r, 2), c[r]});
    m.push_back({0.0, 0.0, 0.0, 1.0});
    json frame;
    frame["file_path"] = i < manifest.file_paths.size() && !manifest.file_paths[i].empty()
                             ? manifest.file_paths[i]
                             : fmt::format("./r_{}", i);
    frame["transform_matrix"] = m;
    frames.push_back(frame);
  }
  doc["frames"] = frames;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail_data(path.string() + ": cannot open for writing");
  out << doc.dump(2) << "\n";
}

}  // namespace duplex
