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

#include "hetsim/isp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace hetsim {

namespace {

inline double clip01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

void check_image(const Image& img) {
  if (img.height < 1 || img.width < 1 ||
      img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * 3)
    throw std::invalid_argument("image: pixel buffer does not match " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + "x3");
}

void wb_inplace(Image& img, const WbGains& g) {
  const double gains[3] = {g.r1, g.r2, g.r3};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = clip01(gains[i % 3] * img.pixels[i]);
}

void gamma_inplace(Image& img, double gamma) {
  if (gamma == 1.0) return;
  for (double& v : img.pixels) v = clip01(std::pow(v, gamma));
}

void check_gains(const WbGains& g) {
  if (!(g.r1 > 0.0) || !(g.r2 > 0.0) || !(g.r3 > 0.0))
    throw std::invalid_argument("white balance gains must be positive");
}

}  // namespace

bool DeviceProfile::is_identity() const {
  return wb.r1 == 1.0 && wb.r2 == 1.0 && wb.r3 == 1.0 && gamma == 1.0 && contrast == 1.0 &&
         brightness == 0.0 && saturation == 1.0 && hue_shift == 0.0 && !quant_levels;
}

void DeviceProfile::validate() const {
  const std::string who = "profile '" + name + "': ";
  if (!(wb.r1 > 0.0) || !(wb.r2 > 0.0) || !(wb.r3 > 0.0)) throw std::invalid_argument(who + "wb gains must be > 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument(who + "gamma must be > 0");
  if (!(contrast > 0.0) || !std::isfinite(contrast)) throw std::invalid_argument(who + "contrast must be > 0");
  if (!(brightness >= -1.0 && brightness <= 1.0)) throw std::invalid_argument(who + "brightness must be in [-1, 1]");
  if (!(saturation >= 0.0) || !std::isfinite(saturation)) throw std::invalid_argument(who + "saturation must be >= 0");
  if (!(hue_shift >= -180.0 && hue_shift <= 180.0)) throw std::invalid_argument(who + "hue_shift must be in [-180, 180]");
  if (quant_levels && *quant_levels < 2) throw std::invalid_argument(who + "quant_levels must be >= 2");
}

Image apply_wb(const Image& img, const WbGains& g) {
  check_image(img);
  check_gains(g);
  Image out = img;
  wb_inplace(out, g);
  return out;
}

Image apply_gamma(const Image& img, double gamma) {
  check_image(img);
  if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  Image out = img;
  gamma_inplace(out, gamma);
  return out;
}

RandomTransform sample_random_transform(const TransformDegrees& deg, RngStream& rng) {
  if (!(deg.wb_degree >= 0.0 && deg.wb_degree < 1.0) || !(deg.gamma_degree >= 0.0 && deg.gamma_degree < 1.0))
    throw std::invalid_argument("transform degrees must be in [0, 1)");
  RandomTransform t;
  t.wb.r1 = rng.uniform(1.0 - deg.wb_degree, 1.0 + deg.wb_degree);
  t.wb.r2 = rng.uniform(1.0 - deg.wb_degree, 1.0 + deg.wb_degree);
  t.wb.r3 = rng.uniform(1.0 - deg.wb_degree, 1.0 + deg.wb_degree);
  t.gamma = rng.uniform(1.0 - deg.gamma_degree, 1.0 + deg.gamma_degree);
  return t;
}

Image apply_random_transform(const Image& img, const RandomTransform& t) {
  check_image(img);
  check_gains(t.wb);
  Image out = img;
  wb_inplace(out, t.wb);
  gamma_inplace(out, t.gamma);
  return out;
}

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) {
      h = 60.0 * ((g - b) / d);
      if (h < 0.0) h += 360.0;
    } else if (mx == g) {
      h = 60.0 * ((b - r) / d + 2.0);
    } else {
      h = 60.0 * ((r - g) / d + 4.0);
    }
  }
  const double s = mx > 0.0 ? d / mx : 0.0;
  return {h, s, mx};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  const double m = v - c;
  double r = 0.0, g = 0.0, b = 0.0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  return {r + m, g + m, b + m};
}

Image quantize(const Image& img, int levels) {
  if (levels < 2) throw std::invalid_argument("quantize: levels must be >= 2");
  Image out = img;
  const double q = levels - 1;
  for (double& v : out.pixels) v = clip01(std::round(v * q) / q);
  return out;
}

Image apply_profile(const Image& img, const DeviceProfile& p) {
  check_image(img);
  p.validate();
  Image out = img;
  auto& px = out.pixels;
  if (p.wb.r1 != 1.0 || p.wb.r2 != 1.0 || p.wb.r3 != 1.0) wb_inplace(out, p.wb);
  gamma_inplace(out, p.gamma);
  if (p.brightness != 0.0)
    for (double& v : px) v = clip01(v + p.brightness);
  if (p.contrast != 1.0)
    for (double& v : px) v = clip01((v - 0.5) * p.contrast + 0.5);
  if (p.saturation != 1.0) {
    for (std::size_t i = 0; i < px.size(); i += 3) {
      const double y = kLumaR * px[i] + kLumaG * px[i + 1] + kLumaB * px[i + 2];
      for (int c = 0; c < 3; ++c) px[i + c] = clip01(y + (px[i + c] - y) * p.saturation);
    }
  }
  if (p.hue_shift != 0.0) {
    for (std::size_t i = 0; i < px.size(); i += 3) {
      auto [h, s, v] = rgb_to_hsv(px[i], px[i + 1], px[i + 2]);
      h = std::fmod(h + p.hue_shift, 360.0);
      if (h < 0.0) h += 360.0;
      const auto rgb = hsv_to_rgb(h, s, v);
      for (int c = 0; c < 3; ++c) px[i + c] = clip01(rgb[c]);
    }
  }
  if (p.quant_levels) out = quantize(out, *p.quant_levels);
  return out;
}

std::vector<DeviceProfile> make_profiles(int n, const ProfileRanges& r, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_profiles: n must be >= 1");
  for (const Interval* iv : {&r.contrast, &r.brightness, &r.saturation, &r.hue, &r.wb_gain, &r.gamma})
    if (!(iv->lo <= iv->hi)) throw std::invalid_argument("make_profiles: interval with lo > hi");
  RngStream rng(seed);
  std::vector<DeviceProfile> out;
  out.reserve(static_cast<std::size_t>(n));
  char name[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(name, sizeof name, "device-%02d", i);
    if (i == 0) {
      out.push_back(DeviceProfile::identity(name));
      continue;
    }
    DeviceProfile p;
    p.name = name;
    p.wb.r1 = rng.uniform(r.wb_gain.lo, r.wb_gain.hi);
    p.wb.r2 = rng.uniform(r.wb_gain.lo, r.wb_gain.hi);
    p.wb.r3 = rng.uniform(r.wb_gain.lo, r.wb_gain.hi);
    p.gamma = rng.uniform(r.gamma.lo, r.gamma.hi);
    p.contrast = rng.uniform(r.contrast.lo, r.contrast.hi);
    p.brightness = rng.uniform(r.brightness.lo, r.brightness.hi);
    p.saturation = rng.uniform(r.saturation.lo, r.saturation.hi);
    p.hue_shift = rng.uniform(r.hue.lo, r.hue.hi);
    p.quant_levels = r.quant_levels;
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

void write_ppm(std::ostream& out, const Image& img) {
  check_image(img);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<unsigned char>(std::lround(clip01(img.pixels[i]) * 255.0));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint64_t image_hash(const Image& img, std::uint64_t h) {
  h ^= static_cast<std::uint64_t>(img.height) << 32 | static_cast<std::uint32_t>(img.width);
  h *= 0x100000001b3ULL;
  for (double v : img.pixels) {
    h ^= std::bit_cast<std::uint64_t>(v);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hetsim
