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

#include <cstdint>
#include <random>
#include <string_view>

namespace hetsim {

// Labeled seed derivation. Every consumer of randomness gets its own stream:
//
//   stream_seed(master, label, a, b) = mix(mix(mix(master ^ fnv1a(label)) ^ a) ^ b)
//
// where mix is the SplitMix64 finalizer. The labels in use are "data",
// "partition", "profiles", "assign", "init", "selection" and "client"
// (a = client id, b = round). Changing this rule changes every result.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view bytes);
std::uint64_t stream_seed(std::uint64_t master, std::string_view label,
                          std::uint64_t a = 0, std::uint64_t b = 0);

// A 64-bit Mersenne Twister that counts how many raw words it has produced.
// Uniform reals and bounded integers are derived without std distributions
// so draws are identical across standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() {
    ++draws_;
    return engine_();
  }

  // Uniform in [0, 1) with 53 bits of resolution. One draw.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi). lo == hi returns lo exactly. One draw.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). One draw.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t draws() const { return draws_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

}  // namespace hetsim
