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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hetsim/fed_data.hpp"
#include "hetsim/fl_core.hpp"
#include "hetsim/heteroswitch.hpp"
#include "hetsim/metrics.hpp"

namespace hetsim {

enum class StrategyKind {
  kFedAvg,
  kFedProx,
  kQFedAvg,
  kScaffold,
  kHeteroSwitch,
  kIspTransform,  // transform every client, no weight averaging
  kIspSwad,       // transform every client, per-batch averaging
  kIspSwa,        // transform every client, per-epoch averaging
};

std::string strategy_name(StrategyKind k);
StrategyKind strategy_from_name(const std::string& name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kFedAvg;
  double mu = 0.1;          // FedProx
  double q = 1e-6;          // q-FedAvg
  double lipschitz = 0.0;   // q-FedAvg; 0 means 1 / lr
  double alpha = 0.9;       // HeteroSwitch EMA
  TransformDegrees degrees; // HeteroSwitch and ISP ablations

  bool uses_transform() const;
  void validate() const;
};

// Everything a run needs besides the FL and strategy configuration.
struct ExperimentSetup {
  std::shared_ptr<RenderCache> cache;
  std::vector<ClientShard> shards;  // profiles assigned
  std::shared_ptr<const ModelSpec> model;
};

struct ServerState {
  ModelState global;
  std::size_t round = 0;                         // rounds completed
  std::vector<double> c_server;                  // Scaffold only
  std::vector<std::vector<double>> c_clients;    // Scaffold only, one per client
  std::optional<EmaTracker> ema;                 // HeteroSwitch family only
};

struct RoundOutcome {
  RoundLog log;
  std::vector<std::uint32_t> selected;
  std::vector<ClientUpdateResult> results;
  std::vector<SwitchLog> switches;
};

// The round engine. Client updates run on up to `threads` workers; each
// client draws from its own (client, round) stream and aggregation is a
// fixed-order reduction, so results do not depend on the worker count.
class FlServer {
 public:
  FlServer(FlConfig cfg, StrategyConfig strategy, ExperimentSetup setup, std::size_t threads = 1);

  RoundOutcome run_round();
  ProfileAccuracy evaluate() const;

  const ServerState& state() const { return state_; }
  const std::vector<SampleSet>& client_data() const { return client_data_; }
  const std::vector<SampleSet>& eval_sets() const { return eval_sets_; }
  const FlConfig& config() const { return cfg_; }

 private:
  FlConfig cfg_;
  StrategyConfig strategy_;
  ExperimentSetup setup_;
  std::size_t threads_;
  ServerState state_;
  std::vector<SampleSet> client_data_;
  std::vector<SampleSet> eval_sets_;
};

struct RunOptions {
  std::size_t threads = 1;
  std::size_t eval_every = 0;  // 0: max(1, T / 50); the final round is always evaluated
  nlohmann::ordered_json config_echo;
  std::function<void(const RoundLog&)> on_round;
};

ExperimentReport run_experiment(const FlConfig& cfg, const StrategyConfig& strategy, const ExperimentSetup& setup,
                                const RunOptions& opts = {});

// Base data, profiles and allocation policy from which setups are derived.
struct ExperimentInputs {
  std::shared_ptr<const BaseDataset> base;
  std::vector<DeviceProfile> profiles;
  std::optional<ShareTable> table;  // uniform over profiles when empty
  ModelSpec model;
  std::shared_ptr<RenderCache> cache;  // created on demand, shared between runs
};

std::shared_ptr<RenderCache> ensure_cache(ExperimentInputs& in);

// Partitions the train split over N clients and assigns profiles. When
// `excluded` is set that profile is dropped from the allocation table and
// the remaining shares are renormalised. When `only` is set every client
// gets that profile.
ExperimentSetup make_setup(ExperimentInputs& in, const FlConfig& cfg, std::optional<int> excluded = std::nullopt,
                           std::optional<int> only = std::nullopt);

struct DgRun {
  int excluded = 0;
  double ood_accuracy = 0.0;
  ExperimentReport report;
};

// Trains without the excluded profile and scores on its test set.
DgRun dg_protocol(const FlConfig& cfg, const StrategyConfig& strategy, ExperimentInputs& in, int excluded,
                  const RunOptions& opts = {});

struct DgSummary {
  std::vector<DgRun> runs;
  double worst_case_ood = 0.0;
  std::vector<std::string> worst_profiles;
};

// One leave-one-out run per profile.
DgSummary dg_sweep(const FlConfig& cfg, const StrategyConfig& strategy, ExperimentInputs& in,
                   const RunOptions& opts = {});

struct MatrixRun {
  DegradationMatrix matrix;
  std::vector<ExperimentReport> rows;
};

// One model per profile trained with every client on that profile, scored on
// every profile's test set.
MatrixRun degradation_matrix(const FlConfig& cfg, const StrategyConfig& strategy, ExperimentInputs& in,
                             DegradationMode mode = DegradationMode::kRelative, const RunOptions& opts = {});

}  // namespace hetsim
