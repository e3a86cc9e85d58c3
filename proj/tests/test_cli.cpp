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


// End-to-end checks of the command-line driver.

#include <doctest.h>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "duplex/binary_io.hpp"
#include "duplex/camera.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string output;
};

Result run_cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string(DUPLEX_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string tiny_config_json(const fs::path& dir) {
  return R"({
  "scene": {"name": "textured_sphere", "grid_resolution": 16, "n_steps": 24, "gt_steps": 48},
  "cameras": {"train_views": 3, "test_views": 2, "width": 16, "height": 16},
  "train": {"total_iters": 6, "distill_views": 3},
  "output": {"dir": ")" + (dir / "run").string() + R"("}
})";
}

}  // namespace

TEST_CASE("cli: full workflow from scene to evaluation") {
  const fs::path dir = duplex::testing::scratch_dir("cli_flow");

  auto r = run_cli("scene --name textured_sphere --resolution 16 --out " + (dir / "scene").string(), dir);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "scene" / "grid.bin"));
  CHECK(fs::exists(dir / "scene" / "scene.json"));

  r = run_cli("extract --grid " + (dir / "scene" / "grid.bin").string() + " --out " + (dir / "mesh").string(), dir);
  REQUIRE(r.code == 0);
  CHECK(r.output.find("2 layers") != std::string::npos);
  CHECK(fs::exists(dir / "mesh" / "layer_0.obj"));
  CHECK(fs::exists(dir / "mesh" / "layer_1.obj"));

  std::ofstream(dir / "config.json") << tiny_config_json(dir);
  r = run_cli("--threads 1 train --config " + (dir / "config.json").string() + " --quiet", dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  for (const char* f : {"config.json", "metrics.json", "checkpoint.bin", "loss.csv", "test_cameras.json"})
    CHECK(fs::exists(dir / "run" / f));

  r = run_cli("bake --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --out " + (dir / "model.dxb").string(), dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);

  for (const char* sub : {"a", "b"}) {
    r = run_cli("render --bundle " + (dir / "model.dxb").string() + " --orbit 2.2,25,3 --raw --gbuffer --out " +
                    (dir / sub).string(),
                dir);
    REQUIRE_MESSAGE(r.code == 0, r.output);
  }
  for (int i = 0; i < 3; ++i) {
    const std::string stem = "frame_000" + std::to_string(i);
    CHECK(duplex::read_file(dir / "a" / (stem + ".png")) == duplex::read_file(dir / "b" / (stem + ".png")));
    CHECK(duplex::read_file(dir / "a" / (stem + ".raw")) == duplex::read_file(dir / "b" / (stem + ".raw")));
    CHECK(fs::exists(dir / "a" / (stem + "_layer1_depth.png")));
  }
  const auto cams = duplex::load_transforms_manifest(dir / "a" / "cameras.json");
  CHECK(cams.cameras.size() == 3);
  CHECK(cams.cameras[0].width() == 16);

  r = run_cli("poses --cameras " + (dir / "a" / "cameras.json").string() + " --count 1000 --poses-seed 4 --out " +
                  (dir / "poses.json").string(),
              dir);
  REQUIRE(r.code == 0);
  CHECK(duplex::load_transforms_manifest(dir / "poses.json").cameras.size() == 1000);

  r = run_cli("eval --bundle " + (dir / "model.dxb").string() + " --manifest " +
                  (dir / "run" / "test_cameras.json").string() + " --oracle textured_sphere --steps 32 --csv " +
                  (dir / "eval.csv").string(),
              dir);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(r.output.find("mean") != std::string::npos);
  std::ifstream csv(dir / "eval.csv");
  int lines = 0;
  for (std::string s; std::getline(csv, s);) ++lines;
  CHECK(lines == 3);

  // Content-addressing between stages.
  r = run_cli("eval --bundle " + (dir / "model.dxb").string() + " --manifest " +
                  (dir / "run" / "test_cameras.json").string() + " --oracle thin_shell",
              dir);
  CHECK(r.code == 3);
  duplex::CameraManifest foreign = duplex::load_transforms_manifest(dir / "run" / "test_cameras.json");
  foreign.scene_hash = "0000000000000000";
  duplex::save_transforms_manifest(foreign, dir / "foreign.json");
  r = run_cli("eval --bundle " + (dir / "model.dxb").string() + " --manifest " + (dir / "foreign.json").string() +
                  " --oracle textured_sphere",
              dir);
  CHECK(r.code == 3);
  CHECK(r.output.find("scene hash") != std::string::npos);

  std::ofstream(dir / "other.json") << R"({"train": {"seed": 5}})";
  r = run_cli("bake --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --config " +
                  (dir / "other.json").string() + " --out " + (dir / "x.dxb").string(),
              dir);
  CHECK(r.code == 3);
  CHECK_FALSE(fs::exists(dir / "x.dxb"));
}

TEST_CASE("cli: usage and data errors map to exit codes") {
  const fs::path dir = duplex::testing::scratch_dir("cli_errors");
  CHECK(run_cli("", dir).code == 2);
  CHECK(run_cli("frobnicate", dir).code == 2);
  CHECK(run_cli("scene --name nowhere --out " + dir.string(), dir).code == 2);
  CHECK(run_cli("scene --name thin_shell --bogus 1 --out " + dir.string(), dir).code == 2);
  CHECK(run_cli("extract --grid " + (dir / "missing.bin").string(), dir).code == 3);
  CHECK(run_cli("render --bundle " + (dir / "missing.dxb").string() + " --orbit 2,20,1 --out " + dir.string(), dir).code == 3);

  std::ofstream(dir / "junk.dxb") << "not a bundle";
  const Result junk = run_cli("render --bundle " + (dir / "junk.dxb").string() + " --orbit 2,20,1 --out " + dir.string(), dir);
  CHECK(junk.code == 3);
  CHECK(junk.output.find("bundle") != std::string::npos);

  REQUIRE(run_cli("scene --name thin_shell --resolution 12 --out " + dir.string(), dir).code == 0);
  CHECK(run_cli("extract --grid " + (dir / "grid.bin").string() + " --thresholds 0.5,0.1", dir).code == 2);
  CHECK(run_cli("train --out " + (dir / "t").string() + " --finetune-target nobody", dir).code == 2);
  std::ofstream(dir / "bad.json") << R"({"train": {"total_iters": -3}})";
  CHECK(run_cli("train --config " + (dir / "bad.json").string() + " --out " + (dir / "t").string(), dir).code == 2);
}
