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


// Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned
// below. The exit status is 0 unless a check crashes or --strict is given and
// a criterion fails.

#include "duplex/assets.hpp"
#include "duplex/binary_io.hpp"
#include "duplex/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <functional>
#include <set>

using namespace duplex;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr int kOracleSteps = 256;
constexpr double kClosedFormTol = 1e-3;
constexpr double kPartitionTol = 1e-9;
constexpr double kOracleSeconds = 10.0;
// Criterion 2
constexpr int kGradFrame = 8;
constexpr double kGradStep = 1e-4;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradFloor = 1e-6;  // denominator floor for vanishing gradients
constexpr int kGradFeatureSamples = 64;
constexpr double kGradSeconds = 120.0;
// Criterion 3
constexpr int kMcResolution = 64;
constexpr double kMcVoxelDiagonals = 1.5;
constexpr int kOrderRays = 10000;
// Criterion 4
constexpr int kPoseSamples = 10000;
constexpr double kAimTol = 1e-6;
// Criteria 5-7
constexpr double kDuplexMarginDb = 1.5;
constexpr double kDuplexFloorDb = 28.0;
constexpr double kConvMarginDb = 0.5;
constexpr double kDistillMarginDb = 0.3;
constexpr double kAblationSeconds = 1800.0;
// Criterion 8
constexpr int kPerfFrame = 256;
constexpr std::size_t kPerfTriangles = 100000;
constexpr double kFrameMillis = 250.0;
constexpr int kFuzzRays = 10000;
constexpr double kFuzzTTol = 1e-9;
// Criterion 10
constexpr double kMetricTol = 1e-6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kGradFloor});
}

DuplexGeometry ramp_duplex(int resolution, int feature_dim, std::uint64_t seed) {
  const DensityGrid grid = bake_grid(make_radial_ramp_field(Aabb::cube(1.0)), {resolution, resolution, resolution});
  return extract_duplex(grid, {0.3, 0.6}, 0.0, feature_dim, seed);
}

DuplexModel ramp_model(int resolution, std::uint64_t seed) {
  const NetArchitecture arch = preset_architecture("compact");
  DuplexModel m;
  m.geometry = ramp_duplex(resolution, arch.feature_dim, seed);
  m.net = init_net(arch, make_layout(arch, m.geometry.layer_count(), Aabb::cube(1.0)), seed + 1);
  m.background = Vec3(1.0, 1.0, 1.0);
  return m;
}

std::size_t triangle_count(const DuplexGeometry& g) {
  std::size_t n = 0;
  for (const auto& l : g.layers) n += l.mesh.triangles.size();
  return n;
}

Ray ray_towards(const Vec3& origin, const Vec3& target) {
  return make_ray(origin, (target - origin).normalized(), 0.0, std::numeric_limits<double>::infinity());
}

Vec3 random_direction(Rng& rng) { return Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(); }

Vec3 random_in_ball(Rng& rng, double radius) {
  return radius * std::cbrt(rng.uniform(0.0, 1.0)) * random_direction(rng);
}

Outcome oracle_correctness() {
  const auto t0 = Clock::now();
  double worst_color = 0, worst_partition = 0;
  const Vec3 color(0.2, 0.5, 0.9);
  Rng rng(1);
  for (double sigma : {0.05, 0.5, 1.0, 2.0, 5.0}) {
    const auto field = make_constant_field(sigma, color, Aabb::cube(1.0));
    for (int i = 0; i < 50; ++i) {
      const auto ray = clip_ray(ray_towards(3.0 * random_direction(rng), random_in_ball(rng, 0.5)), field.bounds());
      if (!ray) continue;
      const RenderSample s = volume_render(field, *ray, kOracleSteps);
      const double t_exact = std::exp(-sigma * (ray->t_far - ray->t_near));
      for (int c = 0; c < 3; ++c) worst_color = std::max(worst_color, std::abs(s.color[c] - color[c] * (1 - t_exact)));
      worst_partition = std::max(worst_partition, std::abs(s.weight_sum + s.transmittance - 1.0));
    }
  }
  for (const auto& name : scene_names()) {
    const auto field = make_scene(scene_from_name(name));
    for (int i = 0; i < 200; ++i) {
      const double r = field.scene_radius();
      const auto ray = clip_ray(ray_towards(3.0 * r * random_direction(rng), random_in_ball(rng, 0.8 * r)), field.bounds());
      if (!ray) continue;
      const RenderSample s = volume_render(field, *ray, kOracleSteps);
      worst_partition = std::max(worst_partition, std::abs(s.weight_sum + s.transmittance - 1.0));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_color <= kClosedFormTol && worst_partition <= kPartitionTol && secs < kOracleSeconds,
          fmt::format("closed-form error {:.2e} (tol {:.0e}), partition error {:.2e} (tol {:.0e}), {:.2f} s", worst_color,
                      kClosedFormTol, worst_partition, kPartitionTol, secs)};
}

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  DuplexModel m = ramp_model(7, 21);
  Rng rng(4);
  for (auto& l : m.net.layers)
    for (auto& b : l.bias) b = 0.1 * rng.normal();
  const auto bvhs = build_layer_bvhs(m.geometry);
  const Camera cam = look_at_origin(Vec3(0.3, 0.2, 1.6), intrinsics_from_fov(0.9, kGradFrame, kGradFrame));
  Tensor target(kGradFrame, kGradFrame, 3);
  for (auto& v : target.data) v = rng.uniform(0.0, 1.0);

  const RenderOutput out = render_model(m, bvhs, cam, true);
  const LossResult loss = mse_loss(out.rgb, target);
  ModelGradient g = ModelGradient::zeros_like(m);
  backward(m, out, loss.grad, g);

  auto eval = [&] { return mse_loss(render_model(m, bvhs, cam).rgb, target).loss; };
  auto fd = [&](double& x) {
    const double x0 = x;
    x = x0 + kGradStep;
    const double up = eval();
    x = x0 - kGradStep;
    const double dn = eval();
    x = x0;
    return (up - dn) / (2 * kGradStep);
  };
  double worst = 0;
  std::size_t checked = 0;
  for (std::size_t li = 0; li < m.net.layers.size(); ++li) {
    for (std::size_t i = 0; i < m.net.layers[li].weights.size(); ++i, ++checked)
      worst = std::max(worst, rel_err(g.net.layers[li].weights[i], fd(m.net.layers[li].weights[i])));
    for (std::size_t i = 0; i < m.net.layers[li].bias.size(); ++i, ++checked)
      worst = std::max(worst, rel_err(g.net.layers[li].bias[i], fd(m.net.layers[li].bias[i])));
  }
  std::size_t total_features = 0;
  for (const auto& l : m.geometry.layers) total_features += l.features.size();
  for (int k = 0; k < kGradFeatureSamples; ++k, ++checked) {
    std::size_t idx = rng.below(total_features);
    std::size_t l = 0;
    while (idx >= m.geometry.layers[l].features.size()) idx -= m.geometry.layers[l++].features.size();
    worst = std::max(worst, rel_err(g.features[l][idx], fd(m.geometry.layers[l].features[idx])));
  }
  const double secs = seconds_since(t0);
  return {worst <= kGradRelTol && secs < kGradSeconds,
          fmt::format("{} triangles, {} parameters checked, worst relative error {:.2e} (tol {:.0e}), {:.1f} s",
                      triangle_count(m.geometry), checked, worst, kGradRelTol, secs)};
}

Outcome geometry_accuracy() {
  const DensityGrid grid = bake_grid(make_radial_ramp_field(Aabb::cube(1.0)), {kMcResolution, kMcResolution, kMcResolution});
  const double diag = grid.spacing().norm();
  double worst = 0;
  for (double iso : {0.3, 0.5, 0.6}) {
    const TriangleMesh mesh = marching_cubes(grid, iso);
    for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - (1.0 - iso)) / diag);
  }
  const DuplexGeometry d = extract_duplex(grid, {0.3, 0.6}, 0.0, 8, 1);
  const auto bvhs = build_layer_bvhs(d);
  Rng rng(9);
  int ordered = 0;
  for (int i = 0; i < kOrderRays; ++i) {
    const Ray ray = ray_towards(3.0 * random_direction(rng), random_in_ball(rng, 0.35));
    const auto outer = bvhs[0].intersect(ray);
    const auto inner = bvhs[1].intersect(ray);
    ordered += outer && inner && outer->t < inner->t;
  }
  return {worst <= kMcVoxelDiagonals && ordered == kOrderRays,
          fmt::format("worst vertex offset {:.3f} voxel diagonals (tol {}), ordered {}/{} rays", worst,
                      kMcVoxelDiagonals, ordered, kOrderRays)};
}

Outcome distillation_sampler() {
  const PoseBounds bounds{3.8, 4.2, 0.2, 1.35, -2.5, 1.0};
  const auto train = random_orbit_cameras(bounds, 64, intrinsics_from_fov(0.7, 128, 128), 5);
  const PoseBounds b = pose_bounds(train);
  const auto poses = sample_distillation_poses(train, kPoseSamples, 6);
  int inside = 0;
  double worst = 0;
  for (const auto& p : poses) {
    inside += b.contains(camera_to_spherical(p));
    const Vec3 to_origin = (-p.center()).normalized();
    worst = std::max(worst, std::atan2(p.forward().cross(to_origin).norm(), p.forward().dot(to_origin)));
  }
  return {inside == kPoseSamples && worst <= kAimTol,
          fmt::format("{}/{} inside bounds, worst aim error {:.2e} rad (tol {:.0e})", inside, kPoseSamples, worst, kAimTol)};
}

struct AblationRun {
  std::string name;
  double psnr = 0;
  double ssim = 0;
  double seconds = 0;
};

AblationRun run_ablation(const fs::path& work, const std::string& name, const std::function<void(RunConfig&)>& edit) {
  RunConfig c;
  c.scene = "glossy_sphere";
  c.vertex_noise_voxels = 1.0;
  c.train_views = 64;
  c.width = c.height = 128;
  c.train.total_iters = 5000;
  c.output_dir = (work / name).string();
  c.cache_dir = (work / "cache").string();
  edit(c);
  const auto t0 = Clock::now();
  const Experiment e(c);
  const ExperimentResult r = e.run();
  AblationRun out{name, r.mean_psnr, r.mean_ssim, seconds_since(t0)};
  fmt::print("  run {:<14} PSNR {:7.3f} dB  SSIM {:.4f}  {:7.1f} s\n", name, out.psnr, out.ssim, out.seconds);
  std::fflush(stdout);
  return out;
}

struct Ablations {
  AblationRun duplex, single_low, single_high, pixelwise, no_distill;
};

Ablations run_ablations(const fs::path& work) {
  Ablations a;
  a.duplex = run_ablation(work, "duplex", [](RunConfig&) {});
  a.single_low = run_ablation(work, "single_1e-4", [](RunConfig& c) { c.thresholds = {1e-4}; });
  a.single_high = run_ablation(work, "single_1e-2", [](RunConfig& c) { c.thresholds = {1e-2}; });
  a.pixelwise = run_ablation(work, "kernel_1x1", [](RunConfig& c) { c.kernel_override = 1; });
  a.no_distill = run_ablation(work, "no_distill", [](RunConfig& c) { c.train.distill = false; });
  return a;
}

Outcome duplex_vs_single(const Ablations& a) {
  const double best_single = std::max(a.single_low.psnr, a.single_high.psnr);
  const double margin = a.duplex.psnr - best_single;
  return {margin >= kDuplexMarginDb && a.duplex.psnr >= kDuplexFloorDb && a.duplex.seconds < kAblationSeconds,
          fmt::format("duplex {:.3f} dB vs best single {:.3f} dB: margin {:+.3f} dB (need {}), floor {} dB, duplex run "
                      "{:.0f} s on {} thread(s)",
                      a.duplex.psnr, best_single, margin, kDuplexMarginDb, kDuplexFloorDb, a.duplex.seconds,
                      omp_get_max_threads())};
}

Outcome conv_vs_pixelwise(const Ablations& a) {
  const double margin = a.duplex.psnr - a.pixelwise.psnr;
  return {margin >= kConvMarginDb, fmt::format("2x2 {:.3f} dB vs 1x1 {:.3f} dB: margin {:+.3f} dB (need {})",
                                               a.duplex.psnr, a.pixelwise.psnr, margin, kConvMarginDb)};
}

Outcome distill_vs_plain(const Ablations& a) {
  const double margin = a.duplex.psnr - a.no_distill.psnr;
  return {margin >= kDistillMarginDb,
          fmt::format("distilled {:.3f} dB vs training views only {:.3f} dB: margin {:+.3f} dB (need {})", a.duplex.psnr,
                      a.no_distill.psnr, margin, kDistillMarginDb)};
}

Outcome performance_floor() {
  DuplexModel m = ramp_model(130, 3);
  const std::size_t tris = triangle_count(m.geometry);
  const auto bvhs = build_layer_bvhs(m.geometry);
  const Camera cam = look_at_origin(Vec3(0.9, 0.6, 2.2), intrinsics_from_fov(0.7, kPerfFrame, kPerfFrame));
  render_model(m, bvhs, cam);
  std::vector<double> millis;
  for (int i = 0; i < 5; ++i) {
    const auto t0 = Clock::now();
    const RenderOutput r = render_model(m, bvhs, cam);
    millis.push_back(1e3 * seconds_since(t0));
  }
  std::sort(millis.begin(), millis.end());
  const double median = millis[millis.size() / 2];

  Rng rng(12);
  int agree = 0, hits = 0;
  double worst_t = 0;
  for (int i = 0; i < kFuzzRays; ++i) {
    const std::size_t l = i % bvhs.size();
    const Ray ray = ray_towards(3.0 * random_direction(rng), random_in_ball(rng, 1.0));
    const auto a = bvhs[l].intersect(ray);
    const auto b = intersect_brute_force(m.geometry.layers[l].mesh, ray);
    if (a.has_value() != b.has_value()) continue;
    if (a) {
      ++hits;
      const double dt = std::abs(a->t - b->t);
      worst_t = std::max(worst_t, dt);
      if (dt > kFuzzTTol) continue;
    }
    ++agree;
  }
  return {tris >= kPerfTriangles && median < kFrameMillis && agree == kFuzzRays,
          fmt::format("{} triangles, {}x{} frame median {:.1f} ms (limit {} ms) on {} thread(s); BVH fuzz {}/{} agree "
                      "({} hits), worst |dt| {:.1e}",
                      tris, kPerfFrame, kPerfFrame, median, kFrameMillis, omp_get_max_threads(), agree, kFuzzRays, hits,
                      worst_t)};
}

Outcome serialization(const fs::path& work) {
  DuplexModel m = ramp_model(16, 5);
  Rng rng(2);
  for (auto& l : m.net.layers)
    for (auto& b : l.bias) b = 0.1 * rng.normal();
  BundleInfo info;
  info.scene_hash = "0123456789abcdef";
  info.config_hash = "fedcba9876543210";
  info.n_steps = 128;
  info.pose_bounds = PoseBounds{3.8, 4.2, 0.2, 1.35, -3.0, 3.0};
  info.camera_angle_x = 0.7;
  info.width = info.height = 48;

  fs::create_directories(work);
  const fs::path path = work / "roundtrip.dxb";
  export_bundle(m, info, path);
  const auto bytes = read_file(path);
  const Bundle b = import_bundle(path);
  const bool reencode_identical = encode_bundle(b.model, b.info) == bytes;
  const bool model_identical = encode_model(b.model) == encode_model(bake_to_float(m));

  const DuplexModel baked = bake_to_float(m);
  const Camera cam = look_at_origin(Vec3(0.4, -0.3, 2.2), intrinsics_from_fov(0.9, 48, 48));
  const bool render_identical =
      render_model(baked, build_layer_bvhs(baked.geometry), cam).rgb.data ==
      render_model(b.model, build_layer_bvhs(b.model.geometry), cam).rgb.data;

  ByteReader r(bytes, "toc");
  r.take(12);
  const std::uint32_t sections = r.u32();
  std::uint32_t rejected = 0;
  for (std::uint32_t i = 0; i < sections; ++i) {
    r.take(32);
    const std::uint64_t offset = r.u64(), length = r.u64();
    r.take(8);
    auto bad = bytes;
    bad[offset + length / 2] ^= 0x10;
    try {
      decode_bundle(bad);
    } catch (const Error&) {
      ++rejected;
    }
  }
  return {reencode_identical && model_identical && render_identical && rejected == sections,
          fmt::format("re-encode identical: {}, model identical: {}, render identical: {}, corrupted sections rejected "
                      "{}/{}",
                      reencode_identical, model_identical, render_identical, rejected, sections)};
}

Outcome metric_values() {
  const ImageF a(16, 16, Vec3(0.25, 0.5, 0.75));
  const ImageF b(16, 16, Vec3(0.35, 0.6, 0.85));
  const double p = psnr(a, b);
  std::vector<double> v;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x)
      for (int c = 0; c < 3; ++c) v.push_back(0.5 + 0.4 * std::sin(0.3 * x + 0.7 * y + c));
  const ImageF wave(24, 24, v);
  const double s = ssim(wave, wave);
  return {std::abs(p - 20.0) <= kMetricTol && std::abs(s - 1.0) <= kMetricTol,
          fmt::format("uniform 0.1 error PSNR {:.12f} dB, identical SSIM {:.12f} (tol {:.0e})", p, s, kMetricTol)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = (fs::temp_directory_path() / "duplex_acceptance").string();
  std::vector<int> only;
  bool strict = false;
  app.add_option("--work-dir", work_dir, "Scratch directory for runs and cached targets");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_flag("--strict", strict, "Exit non-zero when a criterion fails");
  CLI11_PARSE(app, argc, argv);
  const fs::path work(work_dir);
  auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  std::optional<Ablations> ablations;
  auto ablation = [&](const std::function<Outcome(const Ablations&)>& f) {
    return [&, f] {
      if (!ablations) ablations = run_ablations(work);
      return f(*ablations);
    };
  };
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, oracle_correctness},
      {2, gradient_integrity},
      {3, geometry_accuracy},
      {4, distillation_sampler},
      {5, ablation(duplex_vs_single)},
      {6, ablation(conv_vs_pixelwise)},
      {7, ablation(distill_vs_plain)},
      {8, performance_floor},
      {9, [&] { return serialization(work); }},
      {10, metric_values},
  };

  int failed = 0;
  for (const auto& [n, check] : criteria) {
    if (!wanted(n)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      fmt::print("criterion {:2d} ERROR {}\n", n, e.what());
      return 1;
    }
    failed += !o.pass;
    fmt::print("criterion {:2d} {} {}\n", n, o.pass ? "PASS" : "FAIL", o.detail);
    std::fflush(stdout);
  }
  return strict && failed > 0 ? 1 : 0;
}
