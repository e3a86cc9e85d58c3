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

#include "duplex/metrics.hpp"

#include <fmt/format.h>

#include <array>
#include <cmath>

namespace duplex {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 1.0) * (0.01 * 1.0);
constexpr double kC2 = (0.03 * 1.0) * (0.03 * 1.0);
constexpr double kPsnrCap = 99.0;

void check_shapes(const ImageF& a, const ImageF& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height())
    fail_usage(fmt::format("{}: image shapes differ ({}x{} vs {}x{})", what, a.width(), a.height(), b.width(),
                           b.height()));
}

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double sum = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-region filtering of one channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h) {
  static const auto g = gaussian_window();
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * plane[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

ImageF::ImageF(int width, int height, std::vector<double> rgb) : width_(width), height_(height), rgb_(std::move(rgb)) {
  if (width < 1 || height < 1) fail_usage("image: dimensions must be positive");
  if (rgb_.size() != static_cast<std::size_t>(width) * height * 3)
    fail_usage(fmt::format("image: expected {} values, got {}", static_cast<std::size_t>(width) * height * 3,
                           rgb_.size()));
  for (double& v : rgb_) {
    if (!std::isfinite(v)) fail_numerical("image: non-finite pixel value");
    v = std::clamp(v, 0.0, 1.0);
  }
}

ImageF::ImageF(int width, int height, const Vec3& fill)
    : ImageF(width, height, std::vector<double>(static_cast<std::size_t>(width) * height * 3, 0.0)) {
  for (std::size_t i = 0; i < rgb_.size(); ++i) rgb_[i] = std::clamp(fill[i % 3], 0.0, 1.0);
}

double mse(const ImageF& a, const ImageF& b) {
  check_shapes(a, b, "mse");
  double s = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data().size());
}

double psnr(const ImageF& a, const ImageF& b) {
  const double m = mse(a, b);
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const ImageF& a, const ImageF& b) {
  check_shapes(a, b, "ssim");
  const int w = a.width(), h = a.height();
  if (w < kWindow || h < kWindow) fail_usage(fmt::format("ssim: images must be at least {}x{}", kWindow, kWindow));
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data()[i * 3 + c];
      y[i] = b.data()[i * 3 + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h), my = filter_valid(y, w, h);
    const auto sxx = filter_valid(xx, w, h), syy = filter_valid(yy, w, h), sxy = filter_valid(xy, w, h);
    double sum = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2 * mx[i] * my[i] + kC1) * (2 * cov + kC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / 3.0;
}

}  // namespace duplex
