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

#include "hetsim/heteroswitch.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>

namespace hetsim {

EmaTracker update_ema(EmaTracker t, double l_cur) {
  if (!std::isfinite(l_cur)) throw std::invalid_argument("update_ema: non-finite loss");
  if (!t.initialized) {
    t.value = l_cur;
    t.initialized = true;
  } else {
    t.value = t.alpha * l_cur + (1.0 - t.alpha) * t.value;
  }
  return t;
}

EmaTracker server_round_hook(const EmaTracker& t, std::span<const ClientUpdateResult> results) {
  return update_ema(t, aggregate_loss(results));
}

void SwaAccumulator::fold(std::span<const double> w) {
  if (w.size() != mean_.size()) throw std::invalid_argument("SwaAccumulator: length mismatch");
  if (count_ == 0) {
    mean_.assign(w.begin(), w.end());
  } else {
    const auto n = static_cast<double>(count_);
    for (std::size_t j = 0; j < mean_.size(); ++j) mean_[j] += (w[j] - mean_[j]) / (n + 1.0);
  }
  ++count_;
}

HeteroSwitchUpdate heteroswitch_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                                       double l_ema, const HeteroSwitchOptions& opts, RngStream& rng) {
  if (data.size() == 0) throw std::invalid_argument("heteroswitch_client: empty client dataset");
  const auto start = rng.draws();
  HeteroSwitchUpdate u;
  u.hash_before = dataset_hash(data);

  u.decision.initial_loss = dataset_loss(global, data.batch());
  // An infinite L_EMA marks an uninitialised tracker: nothing to compare against.
  const bool have_ema = std::isfinite(l_ema);
  u.decision.switch1 =
      opts.policy == SwitchPolicy::kAlways || (have_ema && u.decision.initial_loss < l_ema);

  // Batch order is drawn before any transform parameters so that the
  // trajectory does not depend on whether the switch fired.
  const auto orders = epoch_orders(data.size(), cfg.epochs, rng);

  SampleSet transformed;
  const SampleSet* train_set = &data;
  if (u.decision.switch1) {
    transformed.labels = data.labels;
    transformed.images.reserve(data.size());
    for (const auto& img : data.images) {
      const RandomTransform t = sample_random_transform(opts.degrees, rng);
      transformed.images.push_back(std::make_shared<const Image>(apply_random_transform(*img, t)));
    }
    train_set = &transformed;
  }
  u.hash_trained = dataset_hash(*train_set);

  std::optional<SwaAccumulator> swa;
  LocalHooks hooks;
  if (u.decision.switch1 && opts.averaging != WeightAveraging::kNone) {
    swa.emplace(global.params);
    auto fold = [&](const ModelState& w) {
      swa->fold(w.params);
      if (opts.on_snapshot) opts.on_snapshot(w.params);
    };
    if (opts.averaging == WeightAveraging::kDense)
      hooks.after_step = [fold](const ModelState& w, std::size_t, std::size_t) { fold(w); };
    else
      hooks.after_epoch = [fold](const ModelState& w, std::size_t) { fold(w); };
  }

  LocalRun run = local_sgd(global, *train_set, cfg, orders, hooks);
  u.decision.train_loss = run.train_loss;
  if (opts.policy == SwitchPolicy::kAlways)
    u.decision.switch2 = swa.has_value();
  else
    u.decision.switch2 = u.decision.switch1 && swa.has_value() && run.train_loss < l_ema;

  u.final_params = run.final_state.params;
  if (swa) u.averaged = swa->mean();
  u.result.params = u.decision.switch2 ? u.averaged : u.final_params;
  u.result.train_loss = run.train_loss;
  u.result.samples = data.size();
  u.result.initial_loss = u.decision.initial_loss;
  u.result.steps = run.steps;
  u.result.draws = rng.draws() - start;
  u.hash_after = dataset_hash(data);
  return u;
}

}  // namespace hetsim
