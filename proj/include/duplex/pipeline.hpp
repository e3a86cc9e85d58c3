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

// Run configuration and the end-to-end experiment: scene, geometry, cameras,
// cached targets, training and held-out evaluation.

#ifndef DUPLEX_PIPELINE_HPP
#define DUPLEX_PIPELINE_HPP

#include "duplex/assets.hpp"
#include "duplex/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace duplex {

struct RunConfig {
  // scene
  std::string scene = "glossy_sphere";
  std::string grid_path;  // optional density grid used for extraction instead of baking the scene
  int grid_resolution = 64;
  Vec3 background{1, 1, 1};
  int n_steps = 128;   // teacher quadrature for distillation targets
  int gt_steps = 512;  // quadrature for ground-truth images

  // geometry
  std::vector<double> thresholds{1e-4, 1e-2};
  double min_diameter_voxels = 3.0;  // in voxel diagonals
  double vertex_noise_voxels = 0.0;  // in voxel edge lengths
  std::uint64_t geometry_seed = 0;

  // cameras; radii are multiples of the scene radius, angles in radians
  int train_views = 64;
  int test_views = 16;
  int width = 128;
  int height = 128;
  double camera_angle_x = 0.6981317007977318;  // 40 degrees
  double radius_min = 3.8;
  double radius_max = 4.2;
  double theta_min = 0.2;
  double theta_max = 1.35;
  double phi_min = -3.141592653589793;
  double phi_max = 3.141592653589793;
  std::uint64_t camera_seed = 1;

  // net
  std::string net_preset = "compact";
  int kernel_override = 0;
  std::uint64_t net_seed = 2;

  // training
  TrainConfig train;
  int distill_views = 1000;
  std::uint64_t poses_seed = 3;
  int checkpoint_every = 0;

  // output
  std::string output_dir;
  std::string cache_dir;  // defaults to <output_dir>/cache
  int threads = 0;        // 0 = runtime default

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;
  /// Hash of every setting that affects results (output paths and threads excluded).
  std::uint64_t hash() const;
  std::filesystem::path resolved_cache_dir() const;
};

struct EvalRow {
  int view;
  double psnr;
  double ssim;
};

struct ExperimentResult {
  DuplexModel model;
  std::vector<IterationLog> log;
  std::vector<EvalRow> eval;
  double mean_psnr = 0;
  double mean_ssim = 0;
  double seconds = 0;
};

class Experiment {
 public:
  explicit Experiment(RunConfig config);

  const RunConfig& config() const { return config_; }
  const VolumetricField& field() const { return field_; }

  Intrinsics intrinsics() const;
  PoseBounds training_bounds() const;
  const std::vector<Camera>& training_cameras() const { return train_cams_; }
  const std::vector<Camera>& test_cameras() const { return test_cams_; }
  const std::vector<Camera>& distillation_cameras() const { return distill_cams_; }

  /// Density grid used for extraction (baked from the scene or loaded).
  DensityGrid density_grid() const;
  /// Extracted layers with features initialized and vertex noise applied.
  DuplexGeometry geometry() const;
  DuplexModel initial_model() const;

  /// Oracle render rounded to f32, cached on disk by (scene, pose, size, steps, background).
  ImageF target(const Camera& cam, int n_steps) const;

  BundleInfo bundle_info() const;

  using Progress = std::function<void(const IterationLog&)>;
  /// Trains from scratch (or from `resume` when given) and evaluates on the test views.
  ExperimentResult run(const Progress& progress = nullptr, const Checkpoint* resume = nullptr) const;

  /// Mean PSNR/SSIM of `model` against ground truth on the test views.
  std::vector<EvalRow> evaluate(const DuplexModel& model) const;

 private:
  std::vector<TrainView> make_views(const DuplexGeometry& geometry, const std::vector<Camera>& cams,
                                    int n_steps) const;

  RunConfig config_;
  VolumetricField field_;
  std::vector<Camera> train_cams_;
  std::vector<Camera> test_cams_;
  std::vector<Camera> distill_cams_;
};

/// Writes iter,phase,view,lr,loss rows; `append` adds to an existing file (resumed runs).
void write_loss_csv(const std::vector<IterationLog>& log, const std::filesystem::path& path, bool append = false);

}  // namespace duplex

#endif  // DUPLEX_PIPELINE_HPP
