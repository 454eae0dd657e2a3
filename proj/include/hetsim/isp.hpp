// Copyright 2026 The hetsim Authors. All rights reserved.
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

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hetsim/rng.hpp"

namespace hetsim {

// RGB image with HWC-interleaved channel values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const Image&) const = default;
};

struct WbGains {
  double r1 = 1.0;
  double r2 = 1.0;
  double r3 = 1.0;
};

struct DeviceProfile {
  std::string name;
  WbGains wb;
  double gamma = 1.0;
  double contrast = 1.0;
  double brightness = 0.0;
  double saturation = 1.0;
  double hue_shift = 0.0;              // degrees, [-180, 180]
  std::optional<int> quant_levels;     // nullopt == off

  static DeviceProfile identity(std::string name = "identity") {
    DeviceProfile p;
    p.name = std::move(name);
    return p;
  }
  bool is_identity() const;
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct TransformDegrees {
  double wb_degree = 0.001;
  double gamma_degree = 0.9;
};

struct RandomTransform {
  WbGains wb;
  double gamma = 1.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct ProfileRanges {
  Interval contrast{0.6, 1.4};
  Interval brightness{-0.15, 0.15};
  Interval saturation{0.5, 1.5};
  Interval hue{-25.0, 25.0};
  Interval wb_gain{0.8, 1.2};
  Interval gamma{0.7, 1.4};
  std::optional<int> quant_levels;  // applied to every non-identity profile when set
};

Image apply_wb(const Image& img, const WbGains& g);
Image apply_gamma(const Image& img, double gamma);

// Draws r1, r2, r3 ~ U(1 - wb_degree, 1 + wb_degree) then
// gamma ~ U(1 - gamma_degree, 1 + gamma_degree): exactly four draws.
RandomTransform sample_random_transform(const TransformDegrees& deg, RngStream& rng);

// WB, then gamma. Used for on-the-fly augmentation.
Image apply_random_transform(const Image& img, const RandomTransform& t);

// WB -> gamma -> brightness -> contrast -> saturation -> hue -> quantization,
// clipping to [0, 1] after each stage. Stages at their identity value are
// skipped so the identity profile is an exact no-op.
Image apply_profile(const Image& img, const DeviceProfile& p);

// Profile 0 is the identity; the rest are drawn uniformly from the ranges.
std::vector<DeviceProfile> make_profiles(int n, const ProfileRanges& ranges, std::uint64_t seed);

// HSV with h in degrees [0, 360), s and v in [0, 1].
std::array<double, 3> rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(double h, double s, double v);

Image quantize(const Image& img, int levels);

// Binary PPM (P6), 8 bits per channel.
void write_ppm(std::ostream& out, const Image& img);

// FNV-1a over the dimensions and the 64-bit pixel words.
std::uint64_t image_hash(const Image& img, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace hetsim
