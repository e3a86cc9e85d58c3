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

#include "duplex/train.hpp"

#include "duplex/binary_io.hpp"

#include <fmt/format.h>

#include <cmath>

namespace duplex {

namespace {

constexpr char kCheckpointMagic[] = "DXFCKPT1";
constexpr std::uint32_t kCheckpointVersion = 1;

void encode_net(ByteWriter& out, const ShadingNet& net) {
  out.string(net.preset);
  const auto& L = net.layout;
  out.u32(L.layer_count);
  out.u32(L.feature_dim);
  out.u32(L.pe_view_levels);
  out.u32(L.pe_pos_levels);
  out.u8(L.use_positions ? 1 : 0);
  for (int a = 0; a < 3; ++a) out.f64(L.position_bounds.lo[a]);
  for (int a = 0; a < 3; ++a) out.f64(L.position_bounds.hi[a]);
  out.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    out.u32(l.in_ch);
    out.u32(l.out_ch);
    out.u32(l.kh);
    out.u32(l.kw);
    out.u32(static_cast<std::uint32_t>(l.activation));
    out.f64_array(l.weights);
    out.f64_array(l.bias);
  }
}

ShadingNet decode_net(ByteReader& in) {
  ShadingNet net;
  net.preset = in.string();
  auto& L = net.layout;
  L.layer_count = static_cast<int>(in.u32());
  L.feature_dim = static_cast<int>(in.u32());
  L.pe_view_levels = static_cast<int>(in.u32());
  L.pe_pos_levels = static_cast<int>(in.u32());
  L.use_positions = in.u8() != 0;
  for (int a = 0; a < 3; ++a) L.position_bounds.lo[a] = in.f64();
  for (int a = 0; a < 3; ++a) L.position_bounds.hi[a] = in.f64();
  const auto n = in.u32();
  if (n > 64) fail_data("model: implausible layer count");
  for (std::uint32_t i = 0; i < n; ++i) {
    ConvLayer l;
    l.in_ch = static_cast<int>(in.u32());
    l.out_ch = static_cast<int>(in.u32());
    l.kh = static_cast<int>(in.u32());
    l.kw = static_cast<int>(in.u32());
    const auto act = in.u32();
    if (act > 2) fail_data("model: unknown activation code");
    l.activation = static_cast<Activation>(act);
    l.weights = in.f64_array();
    l.bias = in.f64_array();
    net.layers.push_back(std::move(l));
  }
  return net;
}

void put_adam(ByteWriter& out, const AdamState& s) {
  out.u64(s.step);
  out.u32(static_cast<std::uint32_t>(s.m.size()));
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    out.f64_array(s.m[i]);
    out.f64_array(s.v[i]);
  }
}

AdamState get_adam(ByteReader& in) {
  AdamState s;
  s.step = in.u64();
  const auto n = in.u32();
  if (n > 1024) fail_data("checkpoint: implausible optimizer tensor count");
  for (std::uint32_t i = 0; i < n; ++i) {
    s.m.push_back(in.f64_array());
    s.v.push_back(in.f64_array());
  }
  return s;
}

Tensor target_tensor(const TrainView& v, int x0, int y0, int w, int h) {
  Tensor t(h, w, 3);
  const int W = v.camera.width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        t.at(y, x, c) = v.target[(static_cast<std::size_t>(y + y0) * W + (x + x0)) * 3 + c];
  return t;
}

}  // namespace

std::string finetune_target_name(FinetuneTarget t) {
  return t == FinetuneTarget::kTeacher ? "teacher" : "ground-truth";
}

FinetuneTarget finetune_target_from_name(const std::string& name) {
  if (name == "ground-truth" || name == "gt") return FinetuneTarget::kGroundTruth;
  if (name == "teacher") return FinetuneTarget::kTeacher;
  fail_usage(fmt::format("unknown fine-tune target '{}' (expected ground-truth or teacher)", name));
}

void TrainConfig::validate() const {
  if (total_iters < 1) fail_usage("train: total_iters must be positive");
  if (!(phase1_fraction > 0.0 && phase1_fraction < 1.0)) fail_usage("train: phase1_fraction must be in (0, 1)");
  if (!(lr_start > 0.0 && lr_end > 0.0 && lr_end <= lr_start)) fail_usage("train: need 0 < lr_end <= lr_start");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
    fail_usage("train: invalid Adam hyperparameters");
  if (patch_size < 0) fail_usage("train: patch_size must be non-negative");
}

int TrainConfig::phase1_iters() const {
  return distill ? static_cast<int>(std::lround(total_iters * phase1_fraction)) : 0;
}

double lr_schedule(int iter, const TrainConfig& config) {
  if (iter < 0 || iter >= config.total_iters) fail_usage(fmt::format("lr_schedule: iteration {} out of range", iter));
  if (config.total_iters == 1) return config.lr_start;
  const double f = static_cast<double>(iter) / (config.total_iters - 1);
  return config.lr_start * std::pow(config.lr_end / config.lr_start, f);
}

void adam_step(const std::vector<ParamRef>& params, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) fail_usage("adam_step: optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad.size() != p.value.size() || state.m[i].size() != p.value.size())
      fail_usage(fmt::format("adam_step: shape mismatch for '{}'", p.name));
    for (std::size_t k = 0; k < p.grad.size(); ++k)
      if (!std::isfinite(p.grad[k]))
        fail_numerical(fmt::format("non-finite gradient in '{}' at index {}", p.name, k));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = beta1 * m[k] + (1.0 - beta1) * g;
      v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
      p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.height != target.height || pred.width != target.width || pred.channels != target.channels)
    fail_usage(fmt::format("mse_loss: shape mismatch ({}x{}x{} vs {}x{}x{})", pred.height, pred.width,
                           pred.channels, target.height, target.width, target.channels));
  LossResult r;
  r.grad = Tensor(pred.height, pred.width, pred.channels);
  const double n = static_cast<double>(pred.data.size());
  double sum = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    sum += d * d;
    r.grad.data[i] = 2.0 * d / n;
  }
  r.loss = sum / n;
  return r;
}

std::vector<std::uint8_t> encode_model(const DuplexModel& model) {
  ByteWriter out;
  for (int c = 0; c < 3; ++c) out.f64(model.background[c]);
  const auto& g = model.geometry;
  out.u32(static_cast<std::uint32_t>(g.layer_count()));
  for (std::size_t l = 0; l < g.layer_count(); ++l) {
    const auto& fm = g.layers[l];
    out.f64(g.thresholds[l]);
    out.u32(static_cast<std::uint32_t>(fm.feature_dim));
    out.u64(fm.mesh.vertices.size());
    for (const auto& v : fm.mesh.vertices)
      for (int a = 0; a < 3; ++a) out.f64(v[a]);
    out.u64(fm.mesh.triangles.size());
    for (const auto& t : fm.mesh.triangles)
      for (auto i : t) out.u32(i);
    out.f64_array(fm.features);
  }
  encode_net(out, model.net);
  return std::move(out.bytes());
}

DuplexModel decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes, "model");
  DuplexModel m;
  for (int c = 0; c < 3; ++c) m.background[c] = in.f64();
  const auto layers = in.u32();
  if (layers > 64) fail_data("model: implausible layer count");
  for (std::uint32_t l = 0; l < layers; ++l) {
    FeatureMesh fm;
    m.geometry.thresholds.push_back(in.f64());
    fm.feature_dim = static_cast<int>(in.u32());
    const auto nv = in.u64();
    if (nv > in.remaining() / 24) fail_data("model: truncated vertex list");
    fm.mesh.vertices.resize(nv);
    for (auto& v : fm.mesh.vertices)
      for (int a = 0; a < 3; ++a) v[a] = in.f64();
    const auto nt = in.u64();
    if (nt > in.remaining() / 12) fail_data("model: truncated triangle list");
    fm.mesh.triangles.resize(nt);
    for (auto& t : fm.mesh.triangles)
      for (auto& i : t) i = in.u32();
    fm.features = in.f64_array();
    m.geometry.layers.push_back(std::move(fm));
  }
  m.net = decode_net(in);
  if (in.remaining() != 0) fail_data("model: trailing bytes");
  m.validate();
  return m;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ByteWriter out;
  out.raw(std::string_view(kCheckpointMagic, 8));
  out.u32(kCheckpointVersion);
  out.u64(ckpt.config_hash);
  out.u64(static_cast<std::uint64_t>(ckpt.iteration));
  const auto model = encode_model(ckpt.model);
  out.u64(model.size());
  out.raw(model);
  put_adam(out, ckpt.adam);
  // Write to a sibling file first so an interrupted save never clobbers the last good checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, out.bytes());
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes, path.string());
  if (in.fixed_string(8) != kCheckpointMagic) fail_data(fmt::format("'{}' is not a checkpoint", path.string()));
  const auto version = in.u32();
  if (version != kCheckpointVersion)
    fail_data(fmt::format("'{}': unsupported checkpoint version {}", path.string(), version));
  Checkpoint c;
  c.config_hash = in.u64();
  c.iteration = static_cast<int>(in.u64());
  const auto n = in.u64();
  c.model = decode_model(in.take(n));
  c.adam = get_adam(in);
  if (in.remaining() != 0) fail_data(fmt::format("'{}': trailing bytes", path.string()));
  return c;
}

Trainer::Trainer(DuplexModel model, TrainConfig config, std::vector<TrainView> distill_views,
                 std::vector<TrainView> train_views, std::uint64_t config_hash)
    : model_(std::move(model)),
      config_(config),
      distill_(std::move(distill_views)),
      train_(std::move(train_views)),
      config_hash_(config_hash) {
  config_.validate();
  model_.validate();
  if (train_.empty()) fail_usage("train: no training views");
  if (config_.phase1_iters() > 0 && distill_.empty()) fail_usage("train: distillation enabled but no distillation views");
  for (const auto* set : {&distill_, &train_})
    for (const auto& v : *set) {
      if (v.target.size() != static_cast<std::size_t>(v.camera.width()) * v.camera.height() * 3)
        fail_usage("train: target size does not match its camera");
      if (v.raster.layers.size() != model_.geometry.layer_count())
        fail_usage("train: view raster does not match the geometry");
    }
  grad_ = ModelGradient::zeros_like(model_);
}

std::vector<ParamRef> Trainer::parameters() {
  std::vector<ParamRef> p;
  for (std::size_t l = 0; l < model_.geometry.layer_count(); ++l)
    p.push_back({fmt::format("features.{}", l), model_.geometry.layers[l].features, grad_.features[l]});
  for (std::size_t i = 0; i < model_.net.layers.size(); ++i) {
    p.push_back({fmt::format("net.{}.weight", i), model_.net.layers[i].weights, grad_.net.layers[i].weights});
    p.push_back({fmt::format("net.{}.bias", i), model_.net.layers[i].bias, grad_.net.layers[i].bias});
  }
  return p;
}

IterationLog Trainer::step() {
  if (done()) fail_usage("train: already finished");
  IterationLog log;
  log.iter = iter_;
  log.phase = iter_ < config_.phase1_iters() ? 1 : 2;
  log.lr = lr_schedule(iter_, config_);
  const auto& views = log.phase == 1 ? distill_ : train_;

  // Stateless per-iteration sampling makes resumed runs follow the same sequence.
  Rng rng(mix_seed(config_.seed, static_cast<std::uint64_t>(iter_)));
  log.view = static_cast<int>(rng.below(views.size()));
  const TrainView& view = views[log.view];
  const int W = view.camera.width(), H = view.camera.height();

  GBuffer gbuf = view.raster.expand(model_.geometry, view.camera);
  int x0 = 0, y0 = 0, pw = W, ph = H;
  if (config_.patch_size > 0 && (config_.patch_size < W || config_.patch_size < H)) {
    pw = std::min(config_.patch_size, W);
    ph = std::min(config_.patch_size, H);
    x0 = static_cast<int>(rng.below(W - pw + 1));
    y0 = static_cast<int>(rng.below(H - ph + 1));
    // Keep the kernel footprint beyond the patch so its outputs match full-frame shading.
    const int fp = model_.net.footprint();
    gbuf = crop_gbuffer(gbuf, x0, y0, std::min(W - x0, pw + fp), std::min(H - y0, ph + fp));
  }

  RenderOutput out = shade(model_, std::move(gbuf), true);
  Tensor pred(ph, pw, 3);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x)
      for (int c = 0; c < 3; ++c) pred.at(y, x, c) = out.rgb.at(y, x, c);
  const LossResult loss = mse_loss(pred, target_tensor(view, x0, y0, pw, ph));
  if (!std::isfinite(loss.loss)) fail_numerical(fmt::format("training loss became non-finite at iteration {}", iter_));
  log.loss = loss.loss;

  Tensor d_rgb(out.rgb.height, out.rgb.width, 3);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x)
      for (int c = 0; c < 3; ++c) d_rgb.at(y, x, c) = loss.grad.at(y, x, c);

  grad_.clear();
  backward(model_, out, d_rgb, grad_);
  adam_step(parameters(), adam_, log.lr, config_.beta1, config_.beta2, config_.eps);
  ++iter_;
  return log;
}

Checkpoint Trainer::checkpoint() const { return {model_, adam_, iter_, config_hash_}; }

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.config_hash != config_hash_)
    fail_data(fmt::format("checkpoint config hash {} does not match run config {}", hex64(ckpt.config_hash),
                          hex64(config_hash_)));
  if (ckpt.iteration < 0 || ckpt.iteration > config_.total_iters) fail_data("checkpoint iteration out of range");
  ckpt.model.validate();
  model_ = ckpt.model;
  adam_ = ckpt.adam;
  iter_ = ckpt.iteration;
  grad_ = ModelGradient::zeros_like(model_);
}

}  // namespace duplex
