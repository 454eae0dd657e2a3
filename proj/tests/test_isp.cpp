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

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "hetsim/isp.hpp"
#include "hetsim/rng.hpp"

namespace hetsim {
namespace {

Image random_image(int h, int w, RngStream& rng) {
  Image img(h, w);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

Image single_pixel(double r, double g, double b) {
  Image img(1, 1);
  img.pixels = {r, g, b};
  return img;
}

TEST(WhiteBalanceTest, Examples) {
  RngStream rng(1);
  Image img = random_image(5, 4, rng);
  EXPECT_EQ(apply_wb(img, {1.0, 1.0, 1.0}), img);
  EXPECT_EQ(apply_wb(single_pixel(0.25, 0.5, 0.5), {2.0, 1.0, 1.0}).pixels, (std::vector<double>{0.5, 0.5, 0.5}));
  EXPECT_EQ(apply_wb(single_pixel(0.8, 0.1, 0.1), {2.0, 1.0, 1.0}).pixels, (std::vector<double>{1.0, 0.1, 0.1}));
  EXPECT_THROW(apply_wb(img, {0.0, 1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(apply_wb(img, {1.0, -1.0, 1.0}), std::invalid_argument);
}

TEST(GammaTest, Examples) {
  RngStream rng(2);
  Image img = random_image(4, 4, rng);
  EXPECT_EQ(apply_gamma(img, 1.0), img);
  EXPECT_DOUBLE_EQ(apply_gamma(single_pixel(0.25, 0.25, 0.25), 0.5).pixels[0], 0.5);
  for (double g : {0.1, 0.7, 1.9, 5.0}) {
    Image out = apply_gamma(single_pixel(0.0, 1.0, 0.0), g);
    EXPECT_EQ(out.pixels, (std::vector<double>{0.0, 1.0, 0.0}));
  }
  EXPECT_THROW(apply_gamma(img, 0.0), std::invalid_argument);
  EXPECT_THROW(apply_gamma(img, -2.0), std::invalid_argument);
}

TEST(GammaTest, Composition) {
  RngStream rng(3);
  Image img = random_image(6, 6, rng);
  for (auto& v : img.pixels) v = 0.05 + 0.9 * v;
  Image two = apply_gamma(apply_gamma(img, 0.6), 1.7);
  Image one = apply_gamma(img, 0.6 * 1.7);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(two.pixels[i], one.pixels[i], 1e-12);
}

TEST(RandomTransformTest, DegenerateDegreesAreExact) {
  RngStream rng(4);
  RandomTransform t = sample_random_transform({0.0, 0.0}, rng);
  EXPECT_EQ(rng.draws(), 4u);
  EXPECT_EQ(t.wb.r1, 1.0);
  EXPECT_EQ(t.wb.r2, 1.0);
  EXPECT_EQ(t.wb.r3, 1.0);
  EXPECT_EQ(t.gamma, 1.0);
}

TEST(RandomTransformTest, DefaultDegreeRangesAndMean) {
  RngStream rng(5);
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    RandomTransform t = sample_random_transform({0.001, 0.9}, rng);
    for (double g : {t.wb.r1, t.wb.r2, t.wb.r3}) {
      EXPECT_GE(g, 0.999);
      EXPECT_LE(g, 1.001);
    }
    EXPECT_GE(t.gamma, 0.1);
    EXPECT_LE(t.gamma, 1.9);
    sum += t.gamma;
  }
  EXPECT_EQ(rng.draws(), 4u * n);
  EXPECT_NEAR(sum / n, 1.0, 0.03);
}

TEST(ProfileTest, IdentityIsBitExact) {
  RngStream rng(6);
  DeviceProfile id = DeviceProfile::identity();
  EXPECT_TRUE(id.is_identity());
  for (int i = 0; i < 50; ++i) {
    Image img = random_image(5, 7, rng);
    EXPECT_EQ(apply_profile(img, id), img);
  }
}

TEST(ProfileTest, ZeroSaturationIsGrey) {
  RngStream rng(7);
  DeviceProfile p = DeviceProfile::identity("grey");
  p.saturation = 0.0;
  p.contrast = 1.2;
  Image out = apply_profile(random_image(6, 6, rng), p);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      EXPECT_EQ(out.at(y, x, 0), out.at(y, x, 1));
      EXPECT_EQ(out.at(y, x, 1), out.at(y, x, 2));
    }
}

TEST(ProfileTest, QuantizationLevels) {
  RngStream rng(8);
  DeviceProfile p = DeviceProfile::identity("q2");
  p.quant_levels = 2;
  Image out = apply_profile(random_image(6, 6, rng), p);
  for (double v : out.pixels) EXPECT_TRUE(v == 0.0 || v == 1.0);
  Image img = random_image(6, 6, rng);
  for (int levels : {2, 5, 16, 256}) EXPECT_EQ(quantize(quantize(img, levels), levels), quantize(img, levels));
}

TEST(ProfileTest, RangeClosure) {
  RngStream rng(9);
  ProfileRanges wide;
  wide.contrast = {0.2, 3.0};
  wide.brightness = {-0.6, 0.6};
  wide.saturation = {0.0, 3.0};
  wide.hue = {-180.0, 180.0};
  wide.wb_gain = {0.3, 3.0};
  wide.gamma = {0.2, 4.0};
  auto profiles = make_profiles(30, wide, 10);
  for (const auto& p : profiles) {
    Image out = apply_profile(random_image(4, 4, rng), p);
    for (double v : out.pixels) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(ProfileTest, StageOrderMatchesManualComposition) {
  DeviceProfile p;
  p.name = "manual";
  p.wb = {1.1, 0.9, 1.05};
  p.gamma = 0.8;
  p.brightness = 0.05;
  p.contrast = 1.3;
  p.saturation = 0.7;
  Image img = single_pixel(0.3, 0.5, 0.6);
  double px[3] = {0.3 * 1.1, 0.5 * 0.9, 0.6 * 1.05};
  for (double& v : px) {
    v = std::pow(v, 0.8) + 0.05;
    v = std::clamp((v - 0.5) * 1.3 + 0.5, 0.0, 1.0);
  }
  const double y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
  Image out = apply_profile(img, p);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.pixels[c], std::clamp(y + (px[c] - y) * 0.7, 0.0, 1.0), 1e-14);
}

TEST(HsvTest, RoundTripAndHueShift) {
  RngStream rng(11);
  for (int i = 0; i < 2000; ++i) {
    double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    auto hsv = rgb_to_hsv(r, g, b);
    auto rgb = hsv_to_rgb(hsv[0], hsv[1], hsv[2]);
    EXPECT_NEAR(rgb[0], r, 1e-9);
    EXPECT_NEAR(rgb[1], g, 1e-9);
    EXPECT_NEAR(rgb[2], b, 1e-9);
  }
  DeviceProfile p = DeviceProfile::identity("hue");
  p.hue_shift = 120.0;
  Image out = apply_profile(single_pixel(1.0, 0.0, 0.0), p);
  EXPECT_NEAR(out.pixels[0], 0.0, 1e-12);
  EXPECT_NEAR(out.pixels[1], 1.0, 1e-12);
  EXPECT_NEAR(out.pixels[2], 0.0, 1e-12);
}

TEST(MakeProfilesTest, Examples) {
  auto one = make_profiles(1, ProfileRanges{}, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(one[0].is_identity());
  auto ten = make_profiles(10, ProfileRanges{}, 3);
  ASSERT_EQ(ten.size(), 10u);
  EXPECT_TRUE(ten[0].is_identity());
  auto key = [](const DeviceProfile& p) {
    return std::vector<double>{p.wb.r1, p.wb.r2, p.wb.r3, p.gamma, p.contrast, p.brightness, p.saturation,
                               p.hue_shift};
  };
  for (std::size_t i = 0; i < ten.size(); ++i)
    for (std::size_t j = i + 1; j < ten.size(); ++j) EXPECT_NE(key(ten[i]), key(ten[j]));
  ProfileRanges r;
  for (std::size_t i = 1; i < ten.size(); ++i) {
    EXPECT_GE(ten[i].contrast, r.contrast.lo);
    EXPECT_LE(ten[i].contrast, r.contrast.hi);
    EXPECT_GE(ten[i].hue_shift, r.hue.lo);
    EXPECT_LE(ten[i].hue_shift, r.hue.hi);
  }
  auto again = make_profiles(10, ProfileRanges{}, 3);
  for (std::size_t i = 0; i < ten.size(); ++i) EXPECT_EQ(key(ten[i]), key(again[i]));
  ProfileRanges fixed;
  fixed.contrast = {1.2, 1.2};
  EXPECT_EQ(make_profiles(3, fixed, 1)[2].contrast, 1.2);
  EXPECT_THROW(make_profiles(0, ProfileRanges{}, 1), std::invalid_argument);
}

TEST(ProfileTest, ValidationNamesField) {
  DeviceProfile p = DeviceProfile::identity("bad");
  p.gamma = -1.0;
  try {
    p.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("gamma"), std::string::npos);
  }
}

TEST(PpmTest, HeaderAndSize) {
  Image img(2, 3, 1.0);
  std::ostringstream os;
  write_ppm(os, img);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("P6\n3 2\n255\n", 0), 0u);
  EXPECT_EQ(s.size(), std::string("P6\n3 2\n255\n").size() + 2 * 3 * 3);
  EXPECT_EQ(static_cast<unsigned char>(s.back()), 255);
}

}  // namespace
}  // namespace hetsim
