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
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "hetsim/fl_core.hpp"
#include "hetsim/isp.hpp"

namespace hetsim {

// Server-side exponential moving average of the aggregated train loss.
struct EmaTracker {
  double value = 0.0;
  double alpha = 0.9;
  bool initialized = false;

  // What clients compare against; +inf until the first update.
  double threshold() const { return initialized ? value : std::numeric_limits<double>::infinity(); }
};

// First call seeds the tracker with l_cur; afterwards
// value <- alpha * l_cur + (1 - alpha) * value.
EmaTracker update_ema(EmaTracker t, double l_cur);

// Sample-weighted mean of the returned train losses folded into the tracker.
EmaTracker server_round_hook(const EmaTracker& t, std::span<const ClientUpdateResult> results);

// Running mean of parameter snapshots: w_avg <- w_avg + (w - w_avg) / (n + 1).
class SwaAccumulator {
 public:
  explicit SwaAccumulator(std::vector<double> init) : mean_(std::move(init)) {}

  void fold(std::span<const double> w);
  const std::vector<double>& mean() const { return mean_; }
  std::size_t count() const { return count_; }

 private:
  std::vector<double> mean_;
  std::size_t count_ = 0;
};

struct SwitchDecision {
  bool switch1 = false;  // data transformed, weights averaged
  bool switch2 = false;  // averaged weights returned
  double initial_loss = 0.0;
  double train_loss = 0.0;
};

// kAdaptive is the loss-gated client update. kAlways applies the transform
// (and the configured averaging) to every client, as the non-selective
// ablations do.
enum class SwitchPolicy { kAdaptive, kAlways };
// kDense averages after every batch, kEpoch after every epoch.
enum class WeightAveraging { kDense, kEpoch, kNone };

struct HeteroSwitchOptions {
  TransformDegrees degrees;
  SwitchPolicy policy = SwitchPolicy::kAdaptive;
  WeightAveraging averaging = WeightAveraging::kDense;
  // Called with each parameter snapshot folded into the accumulator.
  std::function<void(std::span<const double>)> on_snapshot;
};

struct HeteroSwitchUpdate {
  ClientUpdateResult result;
  SwitchDecision decision;
  std::vector<double> final_params;  // W after the last step, whatever is returned
  std::vector<double> averaged;      // W_SWA; empty when no accumulator ran
  std::uint64_t hash_before = 0;     // canonical client data, before the update
  std::uint64_t hash_after = 0;      // canonical client data, after the update
  std::uint64_t hash_trained = 0;    // the data actually trained on
};

// Client update: measure L_init on the full local set, transform a private
// copy of the data and average weights when L_init < L_EMA, and return the
// averaged weights when the train loss is also below L_EMA.
HeteroSwitchUpdate heteroswitch_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                                       double l_ema, const HeteroSwitchOptions& opts, RngStream& rng);

}  // namespace hetsim
