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

#include "duplex/pipeline.hpp"

#include "duplex/image_io.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <chrono>
#include <fstream>
#include <set>

namespace duplex {

namespace {

using json = nlohmann::json;

// Keys accepted per section; anything else is reported as a usage error.
void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
  if (!j.is_object()) fail_usage(fmt::format("config: '{}' must be an object", section));
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) fail_usage(fmt::format("config: unknown key '{}{}'", section.empty() ? "" : section + ".", k));
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) fail_usage("config: expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["scene"] = {{"name", scene},
                {"grid_path", grid_path},
                {"grid_resolution", grid_resolution},
                {"background", vec_json(background)},
                {"n_steps", n_steps},
                {"gt_steps", gt_steps}};
  j["geometry"] = {{"thresholds", thresholds},
                   {"min_diameter_voxels", min_diameter_voxels},
                   {"vertex_noise_voxels", vertex_noise_voxels},
                   {"seed", geometry_seed}};
  j["cameras"] = {{"train_views", train_views}, {"test_views", test_views},   {"width", width},
                  {"height", height},           {"camera_angle_x", camera_angle_x}, {"radius", {radius_min, radius_max}},
                  {"theta", {theta_min, theta_max}}, {"phi", {phi_min, phi_max}}, {"seed", camera_seed}};
  j["net"] = {{"preset", net_preset}, {"kernel_override", kernel_override}, {"seed", net_seed}};
  j["train"] = {{"total_iters", train.total_iters},
                {"phase1_fraction", train.phase1_fraction},
                {"distill", train.distill},
                {"distill_views", distill_views},
                {"lr_start", train.lr_start},
                {"lr_end", train.lr_end},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"eps", train.eps},
                {"patch_size", train.patch_size},
                {"seed", train.seed},
                {"finetune_target", finetune_target_name(train.finetune_target)},
                {"poses_seed", poses_seed},
                {"checkpoint_every", checkpoint_every}};
  j["output"] = {{"dir", output_dir}, {"cache_dir", cache_dir}};
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j, "", {"scene", "geometry", "cameras", "net", "train", "output", "threads"});
    if (j.contains("scene")) {
      const auto& s = j["scene"];
      check_keys(s, "scene", {"name", "grid_path", "grid_resolution", "background", "n_steps", "gt_steps"});
      read(s, "name", c.scene);
      read(s, "grid_path", c.grid_path);
      read(s, "grid_resolution", c.grid_resolution);
      if (s.contains("background")) c.background = vec_from(s["background"]);
      read(s, "n_steps", c.n_steps);
      read(s, "gt_steps", c.gt_steps);
    }
    if (j.contains("geometry")) {
      const auto& g = j["geometry"];
      check_keys(g, "geometry", {"thresholds", "min_diameter_voxels", "vertex_noise_voxels", "seed"});
      read(g, "thresholds", c.thresholds);
      read(g, "min_diameter_voxels", c.min_diameter_voxels);
      read(g, "vertex_noise_voxels", c.vertex_noise_voxels);
      read(g, "seed", c.geometry_seed);
    }
    if (j.contains("cameras")) {
      const auto& k = j["cameras"];
      check_keys(k, "cameras",
                 {"train_views", "test_views", "width", "height", "camera_angle_x", "radius", "theta", "phi", "seed"});
      read(k, "train_views", c.train_views);
      read(k, "test_views", c.test_views);
      read(k, "width", c.width);
      read(k, "height", c.height);
      read(k, "camera_angle_x", c.camera_angle_x);
      if (k.contains("radius")) {
        c.radius_min = k["radius"].at(0).get<double>();
        c.radius_max = k["radius"].at(1).get<double>();
      }
      if (k.contains("theta")) {
        c.theta_min = k["theta"].at(0).get<double>();
        c.theta_max = k["theta"].at(1).get<double>();
      }
      if (k.contains("phi")) {
        c.phi_min = k["phi"].at(0).get<double>();
        c.phi_max = k["phi"].at(1).get<double>();
      }
      read(k, "seed", c.camera_seed);
    }
    if (j.contains("net")) {
      const auto& n = j["net"];
      check_keys(n, "net", {"preset", "kernel_override", "seed"});
      read(n, "preset", c.net_preset);
      read(n, "kernel_override", c.kernel_override);
      read(n, "seed", c.net_seed);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      check_keys(t, "train",
                 {"total_iters", "phase1_fraction", "distill", "distill_views", "lr_start", "lr_end", "beta1", "beta2",
                  "eps", "patch_size", "seed", "finetune_target", "poses_seed", "checkpoint_every"});
      read(t, "total_iters", c.train.total_iters);
      read(t, "phase1_fraction", c.train.phase1_fraction);
      read(t, "distill", c.train.distill);
      read(t, "distill_views", c.distill_views);
      read(t, "lr_start", c.train.lr_start);
      read(t, "lr_end", c.train.lr_end);
      read(t, "beta1", c.train.beta1);
      read(t, "beta2", c.train.beta2);
      read(t, "eps", c.train.eps);
      read(t, "patch_size", c.train.patch_size);
      read(t, "seed", c.train.seed);
      if (t.contains("finetune_target"))
        c.train.finetune_target = finetune_target_from_name(t["finetune_target"].get<std::string>());
      read(t, "poses_seed", c.poses_seed);
      read(t, "checkpoint_every", c.checkpoint_every);
    }
    if (j.contains("output")) {
      const auto& o = j["output"];
      check_keys(o, "output", {"dir", "cache_dir"});
      read(o, "dir", c.output_dir);
      read(o, "cache_dir", c.cache_dir);
    }
    read(j, "threads", c.threads);
  } catch (const json::exception& e) {
    fail_usage(fmt::format("config: {}", e.what()));
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_usage(fmt::format("cannot open config '{}'", path.string()));
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail_usage(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return from_json(j);
}

void RunConfig::validate() const {
  scene_from_name(scene);
  if (grid_resolution < 2) fail_usage("config: grid_resolution must be at least 2");
  if (n_steps < 1 || gt_steps < 1) fail_usage("config: quadrature step counts must be positive");
  if (thresholds.empty()) fail_usage("config: at least one threshold required");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] > thresholds[i - 1])) fail_usage("config: thresholds must be strictly increasing");
  if (min_diameter_voxels < 0 || vertex_noise_voxels < 0) fail_usage("config: negative geometry setting");
  if (train_views < 1 || test_views < 0 || width < 1 || height < 1) fail_usage("config: invalid camera counts or size");
  if (!(camera_angle_x > 0 && camera_angle_x < 3.1)) fail_usage("config: camera_angle_x out of range");
  if (!(radius_min > 0 && radius_min <= radius_max)) fail_usage("config: invalid radius range");
  if (!(theta_min >= 0 && theta_min <= theta_max && theta_max <= 3.141592653589793))
    fail_usage("config: invalid theta range");
  if (!(phi_min <= phi_max)) fail_usage("config: invalid phi range");
  preset_architecture(net_preset, kernel_override);
  train.validate();
  if (train.distill && distill_views < 1) fail_usage("config: distillation needs at least one view");
  if (checkpoint_every < 0 || threads < 0) fail_usage("config: negative checkpoint interval or thread count");
}

std::uint64_t RunConfig::hash() const {
  json j = to_json();
  j.erase("output");
  j.erase("threads");
  j["train"].erase("checkpoint_every");
  return Fnv1a().str(j.dump()).value();
}

std::filesystem::path RunConfig::resolved_cache_dir() const {
  if (!cache_dir.empty()) return cache_dir;
  if (!output_dir.empty()) return std::filesystem::path(output_dir) / "cache";
  return {};
}

Experiment::Experiment(RunConfig config)
    : config_(std::move(config)), field_(make_scene(scene_from_name(config_.scene))) {
  config_.validate();
  const Intrinsics k = intrinsics();
  train_cams_ = random_orbit_cameras(training_bounds(), config_.train_views, k, config_.camera_seed);
  if (config_.test_views > 0)
    test_cams_ = sample_distillation_poses(train_cams_, config_.test_views, mix_seed(config_.camera_seed, 0x7e57));
  if (config_.train.distill) distill_cams_ = sample_distillation_poses(train_cams_, config_.distill_views, config_.poses_seed);
}

Intrinsics Experiment::intrinsics() const {
  return intrinsics_from_fov(config_.camera_angle_x, config_.width, config_.height);
}

PoseBounds Experiment::training_bounds() const {
  const double r = field_.scene_radius();
  return {config_.radius_min * r, config_.radius_max * r, config_.theta_min,
          config_.theta_max,      config_.phi_min,        config_.phi_max};
}

DensityGrid Experiment::density_grid() const {
  if (!config_.grid_path.empty()) return DensityGrid::load(config_.grid_path);
  const int n = config_.grid_resolution;
  return bake_grid(field_, {n, n, n});
}

DuplexGeometry Experiment::geometry() const {
  const DensityGrid grid = density_grid();
  const auto arch = preset_architecture(config_.net_preset, config_.kernel_override);
  const double min_d = config_.min_diameter_voxels * grid.spacing().norm();
  DuplexGeometry g = extract_duplex(grid, config_.thresholds, min_d, arch.feature_dim, config_.geometry_seed);
  if (config_.vertex_noise_voxels > 0)
    perturb_vertices(g, config_.vertex_noise_voxels * grid.spacing().maxCoeff(), mix_seed(config_.geometry_seed, 0x401e));
  return g;
}

DuplexModel Experiment::initial_model() const {
  DuplexModel m;
  m.geometry = geometry();
  const auto arch = preset_architecture(config_.net_preset, config_.kernel_override);
  const auto layout = make_layout(arch, static_cast<int>(m.geometry.layer_count()), field_.bounds());
  m.net = init_net(arch, layout, config_.net_seed);
  m.background = config_.background;
  return m;
}

ImageF Experiment::target(const Camera& cam, int n_steps) const {
  Fnv1a h;
  h.str("target-v1").pod(field_.hash()).pod(n_steps);
  for (int a = 0; a < 3; ++a) h.pod(config_.background[a]);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h.pod(cam.rotation()(r, c));
  for (int a = 0; a < 3; ++a) h.pod(cam.translation()[a]);
  const auto& k = cam.intrinsics();
  h.pod(k.fx).pod(k.fy).pod(k.cx).pod(k.cy).pod(k.width).pod(k.height);

  const auto dir = config_.resolved_cache_dir();
  std::filesystem::path file;
  if (!dir.empty()) {
    file = dir / fmt::format("{}.raw", hex64(h.value()));
    if (std::filesystem::exists(file)) {
      ImageF img = read_raw(file);
      if (img.width() == k.width && img.height() == k.height) return img;
    }
  }
  const ImageF rendered = render_teacher(field_, cam, n_steps, config_.background);
  std::vector<double> rounded = rendered.data();
  for (double& v : rounded) v = static_cast<float>(v);
  ImageF img(rendered.width(), rendered.height(), std::move(rounded));
  if (!file.empty()) {
    std::filesystem::create_directories(dir);
    write_raw(img, file);
  }
  return img;
}

BundleInfo Experiment::bundle_info() const {
  BundleInfo info;
  info.scene_hash = hex64(field_.hash());
  info.config_hash = hex64(config_.hash());
  info.n_steps = config_.n_steps;
  info.pose_bounds = pose_bounds(train_cams_);
  info.camera_angle_x = config_.camera_angle_x;
  info.width = config_.width;
  info.height = config_.height;
  return info;
}

std::vector<TrainView> Experiment::make_views(const DuplexGeometry& geometry, const std::vector<Camera>& cams,
                                              int n_steps) const {
  const auto bvhs = build_layer_bvhs(geometry);
  std::vector<TrainView> views;
  views.reserve(cams.size());
  for (const auto& cam : cams) {
    TrainView v{cam, ViewRaster::capture(rasterize_geometry(geometry, bvhs, cam)), {}};
    const ImageF img = target(cam, n_steps);
    v.target.assign(img.data().begin(), img.data().end());
    views.push_back(std::move(v));
  }
  return views;
}

std::vector<EvalRow> Experiment::evaluate(const DuplexModel& model) const {
  const auto bvhs = build_layer_bvhs(model.geometry);
  std::vector<EvalRow> rows;
  for (std::size_t i = 0; i < test_cams_.size(); ++i) {
    const ImageF pred = render_image(model, bvhs, test_cams_[i]);
    const ImageF gt = target(test_cams_[i], config_.gt_steps);
    rows.push_back({static_cast<int>(i), psnr(pred, gt), ssim(pred, gt)});
  }
  return rows;
}

ExperimentResult Experiment::run(const Progress& progress, const Checkpoint* resume) const {
  const auto t0 = std::chrono::steady_clock::now();
  DuplexModel model = initial_model();
  const int finetune_steps =
      config_.train.finetune_target == FinetuneTarget::kTeacher ? config_.n_steps : config_.gt_steps;
  std::vector<TrainView> distill;
  if (config_.train.distill) distill = make_views(model.geometry, distill_cams_, config_.n_steps);
  std::vector<TrainView> train = make_views(model.geometry, train_cams_, finetune_steps);

  Trainer trainer(std::move(model), config_.train, std::move(distill), std::move(train), config_.hash());
  if (resume) trainer.restore(*resume);

  ExperimentResult result;
  const std::filesystem::path out = config_.output_dir;
  if (!out.empty()) std::filesystem::create_directories(out);
  while (!trainer.done()) {
    result.log.push_back(trainer.step());
    if (progress) progress(result.log.back());
    if (!out.empty() && config_.checkpoint_every > 0 && trainer.iteration() % config_.checkpoint_every == 0)
      save_checkpoint(trainer.checkpoint(), out / "checkpoint.bin");
  }
  if (!out.empty()) {
    save_checkpoint(trainer.checkpoint(), out / "checkpoint.bin");
    write_loss_csv(result.log, out / "loss.csv", resume != nullptr);
  }
  result.model = trainer.model();
  result.eval = evaluate(result.model);
  for (const auto& r : result.eval) {
    result.mean_psnr += r.psnr / static_cast<double>(result.eval.size());
    result.mean_ssim += r.ssim / static_cast<double>(result.eval.size());
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

void write_loss_csv(const std::vector<IterationLog>& log, const std::filesystem::path& path, bool append) {
  const bool header = !append || !std::filesystem::exists(path);
  auto f = fmt::output_file(path.string(), fmt::file::WRONLY | fmt::file::CREATE | (append ? fmt::file::APPEND : fmt::file::TRUNC));
  if (header) f.print("iter,phase,view,lr,loss\n");
  for (const auto& l : log) f.print("{},{},{},{:.9g},{:.9g}\n", l.iter, l.phase, l.view, l.lr, l.loss);
}

}  // namespace duplex
