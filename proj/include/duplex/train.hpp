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

// Two-phase optimization of vertex features and network weights.

#ifndef DUPLEX_TRAIN_HPP
#define DUPLEX_TRAIN_HPP

#include "duplex/render.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace duplex {

enum class FinetuneTarget { kGroundTruth, kTeacher };
std::string finetune_target_name(FinetuneTarget t);
FinetuneTarget finetune_target_from_name(const std::string& name);

struct TrainConfig {
  int total_iters = 5000;
  double phase1_fraction = 0.5;
  bool distill = true;  // false: every iteration uses the training views
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int patch_size = 0;  // 0 = full frame
  std::uint64_t seed = 0;
  FinetuneTarget finetune_target = FinetuneTarget::kGroundTruth;

  void validate() const;
  /// Iterations spent on distillation views.
  int phase1_iters() const;
};

/// lr_start (lr_end / lr_start)^(iter / (total - 1)).
double lr_schedule(int iter, const TrainConfig& config);

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
};

/// Bias-corrected Adam. Every gradient is checked before any parameter moves;
/// a non-finite entry throws a numerical error naming the tensor.
void adam_step(const std::vector<ParamRef>& params, AdamState& state, double lr, double beta1, double beta2,
               double eps);

struct LossResult {
  double loss = 0;
  Tensor grad;  // dLoss/dPred
};

/// Mean squared error over all pixels and channels; gradient 2 (pred - target) / count.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

/// One supervised view: camera, cached hit records and the RGB target.
struct TrainView {
  Camera camera;
  ViewRaster raster;
  std::vector<float> target;  // H x W x 3
};

struct IterationLog {
  int iter = 0;
  int phase = 1;  // 1 = distillation views, 2 = training views
  int view = 0;
  double lr = 0;
  double loss = 0;
};

struct Checkpoint {
  DuplexModel model;
  AdamState adam;
  int iteration = 0;
  std::uint64_t config_hash = 0;
};

std::vector<std::uint8_t> encode_model(const DuplexModel& model);
DuplexModel decode_model(std::span<const std::uint8_t> bytes);

/// Versioned binary: magic "DXFCKPT1", u32 version, hash, iteration, model, optimizer state.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

class Trainer {
 public:
  Trainer(DuplexModel model, TrainConfig config, std::vector<TrainView> distill_views,
          std::vector<TrainView> train_views, std::uint64_t config_hash);

  /// Samples one view for the current iteration, updates the model and advances.
  IterationLog step();
  bool done() const { return iter_ >= config_.total_iters; }
  int iteration() const { return iter_; }

  const DuplexModel& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  const ModelGradient& last_gradient() const { return grad_; }

  Checkpoint checkpoint() const;
  /// Throws when the checkpoint was written under a different configuration.
  void restore(const Checkpoint& ckpt);

 private:
  std::vector<ParamRef> parameters();

  DuplexModel model_;
  TrainConfig config_;
  std::vector<TrainView> distill_;
  std::vector<TrainView> train_;
  std::uint64_t config_hash_;
  AdamState adam_;
  ModelGradient grad_;
  int iter_ = 0;
};

}  // namespace duplex

#endif  // DUPLEX_TRAIN_HPP
