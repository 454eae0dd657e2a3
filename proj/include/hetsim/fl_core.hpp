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

#include "hetsim/fed_data.hpp"
#include "hetsim/nn.hpp"
#include "hetsim/rng.hpp"

namespace hetsim {

struct FlConfig {
  std::size_t clients = 100;     // N
  std::size_t per_round = 20;    // K
  std::size_t batch = 10;        // B
  std::size_t epochs = 1;        // E
  std::size_t rounds = 1000;     // T
  double lr = 0.1;               // eta
  std::uint64_t seed = 0;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct ClientUpdateResult {
  std::uint32_t client = 0;
  std::vector<double> params;
  double train_loss = 0.0;
  std::size_t samples = 0;
  // Loss of the incoming global model on the client's data, when computed.
  double initial_loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t steps = 0;
  std::uint64_t draws = 0;  // PRNG words consumed by the client this round
};

// Uniform sample of K ids out of N without replacement, sorted ascending.
std::vector<std::uint32_t> select_clients(std::size_t n, std::size_t k, std::size_t round, std::uint64_t seed);

// One seeded permutation of [0, n) per epoch; consumes epochs * (n - 1) draws.
std::vector<std::vector<std::size_t>> epoch_orders(std::size_t n, std::size_t epochs, RngStream& rng);

// Hooks into the shared local SGD loop. `adjust` may rewrite the raw
// minibatch gradient before the step; `after_step` sees the post-step model.
struct LocalHooks {
  std::function<void(const ModelState& w, Gradient& g)> adjust;
  std::function<void(const ModelState& w, std::size_t epoch, std::size_t batch_index)> after_step;
  std::function<void(const ModelState& w, std::size_t epoch)> after_epoch;
};

struct LocalRun {
  ModelState final_state;
  double train_loss = 0.0;  // running mean of pre-step batch losses
  std::size_t steps = 0;
};

// E epochs of minibatch SGD over `data` following `orders`.
LocalRun local_sgd(const ModelState& start, const SampleSet& data, const FlConfig& cfg,
                   const std::vector<std::vector<std::size_t>>& orders, const LocalHooks& hooks = {});

ClientUpdateResult fedavg_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                                 RngStream& rng);

// Sample-count-weighted mean of returned params, summed in ascending client id order.
std::vector<double> fedavg_aggregate(std::span<const ClientUpdateResult> results);

// Local steps use g + mu * (w - w_global).
ClientUpdateResult fedprox_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                                  double mu, RngStream& rng);

// FedAvg local training that also records the loss of the global model on
// the client's data (the F_k used by q-FedAvg).
ClientUpdateResult qfedavg_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                                  RngStream& rng);

// q-FFL aggregate with Lipschitz constant L:
//   delta_k = L (w_g - w_k),  h_k = q F_k^(q-1) |delta_k|^2 + L F_k^q,
//   w+ = w_g - sum F_k^q delta_k / sum h_k.
// F_k is each result's initial_loss (zero losses are shifted to 1e-12).
std::vector<double> qfedavg_aggregate(std::span<const double> global, std::span<const ClientUpdateResult> results,
                                      double q, double lipschitz);

struct ScaffoldUpdate {
  ClientUpdateResult result;
  std::vector<double> control;        // c_i+
  std::vector<double> control_delta;  // c_i+ - c_i
};

// Local steps use g + (c - c_i); the new client variate follows option II:
//   c_i+ = c_i - c + (w_g - w_local) / (steps * eta).
ScaffoldUpdate scaffold_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                               std::span<const double> c_server, std::span<const double> c_client, RngStream& rng);

// c+ = c + (K / N) * mean_k(delta_c_k).
void scaffold_server_update(std::vector<double>& c_server, std::span<const ScaffoldUpdate> updates,
                            std::size_t total_clients);

// Sample-count-weighted mean of client train losses.
double aggregate_loss(std::span<const ClientUpdateResult> results);

}  // namespace hetsim
