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

// duplex: command-line driver for scene baking, extraction, pose sampling,
// training, rendering, evaluation and bundle export.

#include "duplex/assets.hpp"
#include "duplex/image_io.hpp"
#include "duplex/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/os.h>
#include <omp.h>

#include <cmath>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace duplex {
namespace {

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail_data(fmt::format("cannot write '{}'", path.string()));
  out << j.dump(2) << '\n';
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail_usage(fmt::format("'{}' is not a comma-separated list of numbers", text));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SceneArgs {
  std::string name = "glossy_sphere";
  int resolution = 64;
  std::string out;
};

int cmd_scene(const SceneArgs& a) {
  const VolumetricField field = make_scene(scene_from_name(a.name));
  fs::create_directories(a.out);
  const DensityGrid grid = bake_grid(field, {a.resolution, a.resolution, a.resolution});
  grid.save(fs::path(a.out) / "grid.bin");
  const auto& b = field.bounds();
  write_json({{"name", a.name},
              {"kind", field.kind()},
              {"bounds", {{"lo", {b.lo.x(), b.lo.y(), b.lo.z()}}, {"hi", {b.hi.x(), b.hi.y(), b.hi.z()}}}},
              {"scene_radius", field.scene_radius()},
              {"scene_hash", hex64(field.hash())},
              {"grid", "grid.bin"},
              {"grid_resolution", a.resolution},
              {"grid_hash", hex64(grid.content_hash())}},
             fs::path(a.out) / "scene.json");
  fmt::print("scene {} -> {} (grid {}^3, hash {})\n", a.name, a.out, a.resolution, hex64(field.hash()));
  return 0;
}

struct ExtractArgs {
  std::string grid;
  std::string thresholds = "1e-4,1e-2";
  double min_diameter_voxels = 3.0;
  std::string out;
};

int cmd_extract(const ExtractArgs& a) {
  const DensityGrid grid = DensityGrid::load(a.grid);
  const auto thresholds = parse_list(a.thresholds);
  const DuplexGeometry g =
      extract_duplex(grid, thresholds, a.min_diameter_voxels * grid.spacing().norm(), 1, 0);
  if (!a.out.empty()) fs::create_directories(a.out);
  fmt::print("{} layers\n", g.layer_count());
  for (std::size_t l = 0; l < g.layer_count(); ++l) {
    const auto& m = g.layers[l].mesh;
    fmt::print("layer {}: iso {:g}, {} vertices, {} triangles\n", l, g.thresholds[l], m.vertices.size(),
               m.triangles.size());
    if (!a.out.empty()) write_obj(m, fs::path(a.out) / fmt::format("layer_{}.obj", l));
  }
  return 0;
}

struct PosesArgs {
  std::string cameras;
  int count = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_poses(const PosesArgs& a) {
  const CameraManifest in = load_transforms_manifest(a.cameras);
  if (in.cameras.empty()) fail_data("camera manifest has no frames");
  CameraManifest out;
  out.cameras = sample_distillation_poses(in.cameras, a.count, a.seed);
  out.scene_hash = in.scene_hash;
  for (int i = 0; i < a.count; ++i) out.file_paths.push_back(fmt::format("distill/{:04d}", i));
  save_transforms_manifest(out, a.out);
  fmt::print("{} poses -> {}\n", out.cameras.size(), a.out);
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string out;
  std::string scene;
  std::string net;
  int iters = 0;
  std::int64_t poses_seed = -1;
  std::string finetune;
  bool resume = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, int threads) {
  RunConfig c = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (!a.out.empty()) c.output_dir = a.out;
  if (!a.scene.empty()) c.scene = a.scene;
  if (!a.net.empty()) c.net_preset = a.net;
  if (a.iters > 0) c.train.total_iters = a.iters;
  if (a.poses_seed >= 0) c.poses_seed = static_cast<std::uint64_t>(a.poses_seed);
  if (!a.finetune.empty()) c.train.finetune_target = finetune_target_from_name(a.finetune);
  if (threads > 0) c.threads = threads;
  if (c.output_dir.empty()) fail_usage("train: an output directory is required (--out or output.dir)");
  c.validate();
  fs::create_directories(c.output_dir);
  const fs::path out = c.output_dir;
  write_json(c.to_json(), out / "config.json");

  Experiment exp(c);
  std::optional<Checkpoint> resume;
  if (a.resume && fs::exists(out / "checkpoint.bin")) resume = load_checkpoint(out / "checkpoint.bin");
  const int report = std::max(1, c.train.total_iters / 20);
  const auto result = exp.run(
      [&](const IterationLog& l) {
        if (!a.quiet && (l.iter % report == 0 || l.iter + 1 == c.train.total_iters))
          fmt::print("iter {:6d}  phase {}  lr {:.3e}  loss {:.6f}\n", l.iter, l.phase, l.lr, l.loss);
      },
      resume ? &*resume : nullptr);
  json metrics = {{"mean_psnr", result.mean_psnr}, {"mean_ssim", result.mean_ssim}, {"seconds", result.seconds},
                  {"config_hash", hex64(c.hash())}};
  for (const auto& r : result.eval) metrics["views"].push_back({{"view", r.view}, {"psnr", r.psnr}, {"ssim", r.ssim}});
  write_json(metrics, out / "metrics.json");
  save_transforms_manifest({exp.test_cameras(), {}, exp.bundle_info().scene_hash}, out / "test_cameras.json");
  fmt::print("held-out PSNR {:.3f} dB  SSIM {:.4f}  ({:.1f} s)\n", result.mean_psnr, result.mean_ssim, result.seconds);
  return 0;
}

struct BakeArgs {
  std::string checkpoint;
  std::string config;
  std::string out;
};

int cmd_bake(const BakeArgs& a) {
  const fs::path config = a.config.empty() ? fs::path(a.checkpoint).parent_path() / "config.json" : fs::path(a.config);
  const RunConfig c = RunConfig::load(config);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (ckpt.config_hash != c.hash())
    fail_data(fmt::format("checkpoint config hash {} does not match '{}' ({})", hex64(ckpt.config_hash),
                          config.string(), hex64(c.hash())));
  const Experiment exp(c);
  export_bundle(ckpt.model, exp.bundle_info(), a.out);
  fmt::print("bundle -> {} ({} layers, preset {})\n", a.out, ckpt.model.geometry.layer_count(), ckpt.model.net.preset);
  return 0;
}

struct RenderArgs {
  std::string bundle;
  std::string manifest;
  std::string orbit;  // radius,elevation_deg,frames
  std::string out;
  int width = 0;
  int height = 0;
  bool raw = false;
  bool gbuffer = false;
};

void dump_gbuffer(const GBuffer& g, const fs::path& dir, const std::string& stem) {
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const auto& L = g.layers[l];
    double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
    for (std::size_t i = 0; i < g.pixel_count(); ++i)
      if (L.mask[i]) zmin = std::min(zmin, L.depth[i]), zmax = std::max(zmax, L.depth[i]);
    std::vector<double> depth(g.pixel_count() * 3, 0.0), mask(g.pixel_count() * 3), bary(g.pixel_count() * 3, 0.0);
    for (std::size_t i = 0; i < g.pixel_count(); ++i) {
      const double d = L.mask[i] ? 1.0 - (L.depth[i] - zmin) / std::max(zmax - zmin, 1e-12) : 0.0;
      for (int c = 0; c < 3; ++c) {
        depth[i * 3 + c] = d;
        mask[i * 3 + c] = L.mask[i];
        bary[i * 3 + c] = L.mask[i] ? L.bary[i][c] : 0.0;
      }
    }
    write_png(ImageF(g.width, g.height, depth), dir / fmt::format("{}_layer{}_depth.png", stem, l));
    write_png(ImageF(g.width, g.height, mask), dir / fmt::format("{}_layer{}_mask.png", stem, l));
    write_png(ImageF(g.width, g.height, bary), dir / fmt::format("{}_layer{}_bary.png", stem, l));
  }
}

int cmd_render(const RenderArgs& a) {
  const Bundle b = import_bundle(a.bundle);
  const int w = a.width > 0 ? a.width : (b.info.width > 0 ? b.info.width : 256);
  const int h = a.height > 0 ? a.height : (b.info.height > 0 ? b.info.height : 256);
  const double fov = b.info.camera_angle_x > 0 ? b.info.camera_angle_x : 0.6981317007977318;
  std::vector<Camera> cams;
  if (!a.manifest.empty()) {
    cams = load_transforms_manifest(a.manifest, w, h).cameras;
  } else if (!a.orbit.empty()) {
    const auto v = parse_list(a.orbit);
    if (v.size() != 3 || v[0] <= 0 || v[2] < 1) fail_usage("--orbit expects radius,elevation_deg,frames");
    const double theta = M_PI / 2 - v[1] * M_PI / 180.0;
    cams = orbit_path(v[0], theta, static_cast<int>(v[2]), intrinsics_from_fov(fov, w, h));
  } else {
    fail_usage("render: give --manifest or --orbit");
  }
  fs::create_directories(a.out);
  const auto bvhs = build_layer_bvhs(b.model.geometry);
  CameraManifest written;
  written.scene_hash = b.info.scene_hash;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const std::string stem = fmt::format("frame_{:04d}", i);
    const RenderOutput r = render_model(b.model, bvhs, cams[i]);
    const ImageF img = to_image(r.rgb);
    write_png(img, fs::path(a.out) / (stem + ".png"));
    if (a.raw) write_raw(img, fs::path(a.out) / (stem + ".raw"));
    if (a.gbuffer) dump_gbuffer(r.gbuf, a.out, stem);
    written.cameras.push_back(cams[i]);
    written.file_paths.push_back(stem);
  }
  save_transforms_manifest(written, fs::path(a.out) / "cameras.json");
  fmt::print("{} frames -> {}\n", cams.size(), a.out);
  return 0;
}

struct EvalArgs {
  std::string bundle;
  std::string manifest;
  std::string oracle;  // scene name; otherwise targets are the manifest's image files
  int steps = 512;
  std::string csv;
};

int cmd_eval(const EvalArgs& a) {
  const Bundle b = import_bundle(a.bundle);
  const CameraManifest m = load_transforms_manifest(a.manifest, b.info.width > 0 ? b.info.width : 800,
                                                    b.info.height > 0 ? b.info.height : 800);
  if (!m.scene_hash.empty() && !b.info.scene_hash.empty() && m.scene_hash != b.info.scene_hash)
    fail_data(fmt::format("camera manifest scene hash {} does not match bundle scene hash {}", m.scene_hash,
                          b.info.scene_hash));
  std::optional<VolumetricField> field;
  if (!a.oracle.empty()) {
    field = make_scene(scene_from_name(a.oracle));
    if (!b.info.scene_hash.empty() && hex64(field->hash()) != b.info.scene_hash)
      fail_data(fmt::format("oracle scene '{}' does not match the bundle's scene hash", a.oracle));
  }
  const auto bvhs = build_layer_bvhs(b.model.geometry);
  const fs::path base = fs::path(a.manifest).parent_path();
  std::unique_ptr<fmt::ostream> csv;
  if (!a.csv.empty()) {
    csv = std::make_unique<fmt::ostream>(fmt::output_file(a.csv));
    csv->print("view,psnr,ssim\n");
  }
  fmt::print("{:>6}  {:>9}  {:>7}\n", "view", "PSNR(dB)", "SSIM");
  double sp = 0, ss = 0;
  for (std::size_t i = 0; i < m.cameras.size(); ++i) {
    const ImageF pred = render_image(b.model, bvhs, m.cameras[i]);
    ImageF target;
    if (field) {
      target = render_teacher(*field, m.cameras[i], a.steps, b.model.background);
    } else {
      fs::path p = base / m.file_paths.at(i);
      if (p.extension().empty()) p += ".png";
      target = read_png(p);
    }
    const double p = psnr(pred, target), s = ssim(pred, target);
    sp += p;
    ss += s;
    fmt::print("{:>6}  {:>9.3f}  {:>7.4f}\n", i, p, s);
    if (csv) csv->print("{},{:.6f},{:.6f}\n", i, p, s);
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, m.cameras.size()));
  fmt::print("{:>6}  {:>9.3f}  {:>7.4f}\n", "mean", sp / n, ss / n);
  return 0;
}

}  // namespace
}  // namespace duplex

int main(int argc, char** argv) {
  using namespace duplex;
  CLI::App app{"Duplex mesh radiance fields: extraction, training, baking and rendering"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (1 = bit-stable runs)")->check(CLI::NonNegativeNumber);

  SceneArgs scene;
  auto* s = app.add_subcommand("scene", "Write a procedural scene descriptor and density grid");
  s->add_option("--name", scene.name, "Scene id")->check(CLI::IsMember(scene_names()));
  s->add_option("--resolution", scene.resolution, "Grid resolution per axis")->check(CLI::Range(2, 1024));
  s->add_option("--out", scene.out, "Output directory")->required();

  ExtractArgs extract;
  auto* e = app.add_subcommand("extract", "Extract layered meshes from a density grid");
  e->add_option("--grid", extract.grid, "Density grid file")->required();
  e->add_option("--thresholds", extract.thresholds, "Comma-separated iso-levels, ascending");
  e->add_option("--min-diameter-voxels", extract.min_diameter_voxels, "Component filter in voxel diagonals");
  e->add_option("--out", extract.out, "Directory for per-layer OBJ files");

  PosesArgs poses;
  auto* p = app.add_subcommand("poses", "Sample distillation poses inside the training cameras' bounds");
  p->add_option("--cameras", poses.cameras, "Training camera manifest (transforms JSON)")->required();
  p->add_option("--count", poses.count, "Number of poses")->check(CLI::PositiveNumber);
  p->add_option("--poses-seed,--seed", poses.seed, "Sampler seed");
  p->add_option("--out", poses.out, "Output manifest")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model; writes checkpoint, loss CSV and metrics");
  t->add_option("--config", train.config, "Run configuration JSON");
  t->add_option("--out", train.out, "Output directory (overrides output.dir)");
  t->add_option("--scene", train.scene, "Scene id override");
  t->add_option("--net", train.net, "Net preset override")->check(CLI::IsMember({"compact", "quality"}));
  t->add_option("--iters", train.iters, "Total iterations override")->check(CLI::PositiveNumber);
  t->add_option("--poses-seed", train.poses_seed, "Distillation pose seed override");
  t->add_option("--finetune-target", train.finetune, "ground-truth or teacher");
  t->add_flag("--resume", train.resume, "Continue from <out>/checkpoint.bin");
  t->add_flag("--quiet", train.quiet, "Suppress per-iteration output");

  RenderArgs render;
  auto* r = app.add_subcommand("render", "Render PNG frames from a bundle");
  r->add_option("--bundle", render.bundle, "Bundle file")->required();
  r->add_option("--manifest", render.manifest, "Camera manifest");
  r->add_option("--orbit", render.orbit, "radius,elevation_deg,frames");
  r->add_option("--out", render.out, "Output directory")->required();
  r->add_option("--width", render.width, "Image width");
  r->add_option("--height", render.height, "Image height");
  r->add_flag("--raw", render.raw, "Also write f32 raw dumps");
  r->add_flag("--gbuffer", render.gbuffer, "Also write depth/mask/barycentric PNGs");

  EvalArgs eval;
  auto* v = app.add_subcommand("eval", "PSNR/SSIM of a bundle against oracle renders or images");
  v->add_option("--bundle", eval.bundle, "Bundle file")->required();
  v->add_option("--manifest", eval.manifest, "Camera manifest")->required();
  v->add_option("--oracle", eval.oracle, "Scene id to render targets with");
  v->add_option("--steps", eval.steps, "Oracle quadrature steps")->check(CLI::PositiveNumber);
  v->add_option("--csv", eval.csv, "Also write CSV");

  BakeArgs bake;
  auto* b = app.add_subcommand("bake", "Export a checkpoint as a bundle");
  b->add_option("--checkpoint", bake.checkpoint, "Checkpoint file")->required();
  b->add_option("--config", bake.config, "Run configuration (default: config.json next to the checkpoint)");
  b->add_option("--out", bake.out, "Bundle path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }

  try {
    if (threads > 0) omp_set_num_threads(threads);
    if (*s) return cmd_scene(scene);
    if (*e) return cmd_extract(extract);
    if (*p) return cmd_poses(poses);
    if (*t) return cmd_train(train, threads);
    if (*r) return cmd_render(render);
    if (*v) return cmd_eval(eval);
    if (*b) return cmd_bake(bake);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(err.kind());
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(ErrorKind::kData);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return static_cast<int>(ErrorKind::kData);
  }
  return 0;
}
