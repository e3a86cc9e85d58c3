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

#ifndef DUPLEX_METRICS_HPP
#define DUPLEX_METRICS_HPP

#include "duplex/types.hpp"

#include <vector>

namespace duplex {

/// RGB image, channel-fastest. Values are clamped to [0,1] on construction;
/// non-finite values are rejected.
class ImageF {
 public:
  ImageF() = default;
  ImageF(int width, int height, std::vector<double> rgb);
  ImageF(int width, int height, const Vec3& fill);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<double>& data() const { return rgb_; }
  double at(int x, int y, int c) const { return rgb_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> rgb_;
};

double mse(const ImageF& a, const ImageF& b);

/// Peak 1.0; identical images give 99.
double psnr(const ImageF& a, const ImageF& b);

/// Gaussian 11x11 window (sigma 1.5), K1 = 0.01, K2 = 0.03, valid region only,
/// mean over channels. Both sides must be at least 11 pixels.
double ssim(const ImageF& a, const ImageF& b);

}  // namespace duplex

#endif  // DUPLEX_METRICS_HPP
