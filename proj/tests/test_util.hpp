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

#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "hetsim/experiment.hpp"
#include "hetsim/nn.hpp"
#include "hetsim/rng.hpp"

namespace hetsim::testing {

// Owns sample storage so a Batch can point into it.
struct OwnedBatch {
  std::vector<std::vector<double>> data;
  Batch batch;
};

inline OwnedBatch random_batch(const ModelSpec& spec, std::size_t n, RngStream& rng) {
  OwnedBatch b;
  b.data.resize(n);
  for (auto& x : b.data) {
    x.resize(spec.input().size());
    for (double& v : x) v = rng.uniform();
  }
  for (std::size_t i = 0; i < n; ++i) {
    b.batch.inputs.emplace_back(b.data[i]);
    b.batch.labels.push_back(static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(spec.classes()))));
  }
  return b;
}

// Small synthetic world: 8x8 images, 4 classes.
inline ExperimentInputs tiny_inputs(std::uint64_t seed, int n_profiles, int n_train = 400, int n_test = 80) {
  auto base = std::make_shared<BaseDataset>(gen_base_synthetic(n_train, n_test, 4, 8, 8, stream_seed(seed, "data")));
  auto profiles = make_profiles(n_profiles, ProfileRanges{}, stream_seed(seed, "profiles"));
  return ExperimentInputs{base, profiles, std::nullopt, ModelSpec::small_cnn({8, 8, 3}, 4), nullptr};
}

inline FlConfig tiny_fl(std::uint64_t seed, std::size_t rounds = 5) {
  FlConfig c;
  c.clients = 10;
  c.per_round = 4;
  c.batch = 10;
  c.epochs = 1;
  c.rounds = rounds;
  c.lr = 0.1;
  c.seed = seed;
  return c;
}

inline bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

}  // namespace hetsim::testing
