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

#include "hetsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hetsim/parallel.hpp"

namespace hetsim {

namespace {

struct StrategyName {
  StrategyKind kind;
  const char* name;
};

constexpr StrategyName kStrategyNames[] = {
    {StrategyKind::kFedAvg, "fedavg"},
    {StrategyKind::kFedProx, "fedprox"},
    {StrategyKind::kQFedAvg, "qfedavg"},
    {StrategyKind::kScaffold, "scaffold"},
    {StrategyKind::kHeteroSwitch, "heteroswitch"},
    {StrategyKind::kIspTransform, "isp-transform"},
    {StrategyKind::kIspSwad, "isp-swad"},
    {StrategyKind::kIspSwa, "isp-swa"},
};

HeteroSwitchOptions switch_options(const StrategyConfig& s) {
  HeteroSwitchOptions o;
  o.degrees = s.degrees;
  switch (s.kind) {
    case StrategyKind::kIspTransform:
      o.policy = SwitchPolicy::kAlways;
      o.averaging = WeightAveraging::kNone;
      break;
    case StrategyKind::kIspSwad:
      o.policy = SwitchPolicy::kAlways;
      o.averaging = WeightAveraging::kDense;
      break;
    case StrategyKind::kIspSwa:
      o.policy = SwitchPolicy::kAlways;
      o.averaging = WeightAveraging::kEpoch;
      break;
    default:
      break;
  }
  return o;
}

}  // namespace

std::string strategy_name(StrategyKind k) {
  for (const auto& e : kStrategyNames)
    if (e.kind == k) return e.name;
  return "?";
}

StrategyKind strategy_from_name(const std::string& name) {
  for (const auto& e : kStrategyNames)
    if (name == e.name) return e.kind;
  throw std::invalid_argument("unknown strategy '" + name + "'");
}

bool StrategyConfig::uses_transform() const {
  return kind == StrategyKind::kHeteroSwitch || kind == StrategyKind::kIspTransform ||
         kind == StrategyKind::kIspSwad || kind == StrategyKind::kIspSwa;
}

void StrategyConfig::validate() const {
  if (!(mu >= 0.0)) throw std::invalid_argument("strategy.mu must be >= 0");
  if (!(q >= 0.0)) throw std::invalid_argument("strategy.q must be >= 0");
  if (!(lipschitz >= 0.0)) throw std::invalid_argument("strategy.lipschitz must be >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("strategy.alpha must be in (0, 1]");
  if (!(degrees.wb_degree >= 0.0 && degrees.wb_degree < 1.0))
    throw std::invalid_argument("strategy.wb_degree must be in [0, 1)");
  if (!(degrees.gamma_degree >= 0.0 && degrees.gamma_degree < 1.0))
    throw std::invalid_argument("strategy.gamma_degree must be in [0, 1)");
}

FlServer::FlServer(FlConfig cfg, StrategyConfig strategy, ExperimentSetup setup, std::size_t threads)
    : cfg_(cfg), strategy_(strategy), setup_(std::move(setup)), threads_(std::max<std::size_t>(1, threads)) {
  cfg_.validate();
  strategy_.validate();
  if (!setup_.cache || !setup_.model) throw std::invalid_argument("experiment setup is incomplete");
  if (setup_.shards.size() != cfg_.clients)
    throw std::invalid_argument("experiment setup has " + std::to_string(setup_.shards.size()) +
                                " shards but fl.clients is " + std::to_string(cfg_.clients));

  state_.global = init_params(*setup_.model, stream_seed(cfg_.seed, "init"));

  client_data_.resize(setup_.shards.size());
  parallel_for(client_data_.size(), threads_,
               [&](std::size_t i) { client_data_[i] = render_shard(setup_.shards[i], *setup_.cache); });
  for (std::size_t i = 0; i < client_data_.size(); ++i) {
    if (client_data_[i].size() < cfg_.batch)
      throw std::invalid_argument("client " + std::to_string(i) + " holds " + std::to_string(client_data_[i].size()) +
                                  " samples, fewer than fl.batch (B=" + std::to_string(cfg_.batch) + ")");
  }

  const std::size_t n_profiles = setup_.cache->profiles().size();
  eval_sets_.resize(n_profiles);
  const std::size_t n_test = setup_.cache->base().test_images.size();
  parallel_for(n_profiles, threads_, [&](std::size_t p) {
    for (std::size_t i = 0; i < n_test; ++i) {
      eval_sets_[p].images.push_back(setup_.cache->get(Split::kTest, i, static_cast<int>(p)));
      eval_sets_[p].labels.push_back(setup_.cache->base().test_labels[i]);
    }
  });

  if (strategy_.kind == StrategyKind::kScaffold) {
    state_.c_server.assign(state_.global.params.size(), 0.0);
    state_.c_clients.assign(cfg_.clients, std::vector<double>(state_.global.params.size(), 0.0));
  }
  if (strategy_.uses_transform()) state_.ema = EmaTracker{0.0, strategy_.alpha, false};
}

RoundOutcome FlServer::run_round() {
  RoundOutcome out;
  const std::size_t round = state_.round + 1;
  out.log.round = round;
  out.selected = select_clients(cfg_.clients, cfg_.per_round, round, cfg_.seed);
  const std::size_t k = out.selected.size();
  out.results.resize(k);
  std::vector<ScaffoldUpdate> scaffold(strategy_.kind == StrategyKind::kScaffold ? k : 0);
  std::vector<HeteroSwitchUpdate> switched(strategy_.uses_transform() ? k : 0);
  const double threshold = state_.ema ? state_.ema->threshold() : 0.0;
  const HeteroSwitchOptions hs_opts = switch_options(strategy_);

  parallel_for(k, threads_, [&](std::size_t i) {
    const std::uint32_t id = out.selected[i];
    const SampleSet& data = client_data_[id];
    RngStream rng(stream_seed(cfg_.seed, "client", id, round));
    try {
      switch (strategy_.kind) {
        case StrategyKind::kFedAvg:
          out.results[i] = fedavg_client(state_.global, data, cfg_, rng);
          break;
        case StrategyKind::kFedProx:
          out.results[i] = fedprox_client(state_.global, data, cfg_, strategy_.mu, rng);
          break;
        case StrategyKind::kQFedAvg:
          out.results[i] = qfedavg_client(state_.global, data, cfg_, rng);
          break;
        case StrategyKind::kScaffold:
          scaffold[i] = scaffold_client(state_.global, data, cfg_, state_.c_server, state_.c_clients[id], rng);
          out.results[i] = scaffold[i].result;
          break;
        default:
          switched[i] = heteroswitch_client(state_.global, data, cfg_, threshold, hs_opts, rng);
          out.results[i] = switched[i].result;
          break;
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("round " + std::to_string(round) + ", client " + std::to_string(id) + ": " + e.what());
    }
    out.results[i].client = id;
    if (!scaffold.empty()) scaffold[i].result.client = id;
  });

  std::vector<double> next;
  if (strategy_.kind == StrategyKind::kQFedAvg) {
    const double lip = strategy_.lipschitz > 0.0 ? strategy_.lipschitz : 1.0 / cfg_.lr;
    next = qfedavg_aggregate(state_.global.params, out.results, strategy_.q, lip);
  } else {
    next = fedavg_aggregate(out.results);
  }
  for (double v : next)
    if (!std::isfinite(v)) throw std::runtime_error("round " + std::to_string(round) + ": aggregate is not finite");

  if (strategy_.kind == StrategyKind::kScaffold) {
    for (std::size_t i = 0; i < k; ++i) state_.c_clients[out.selected[i]] = scaffold[i].control;
    scaffold_server_update(state_.c_server, scaffold, cfg_.clients);
  }

  out.log.mean_loss = aggregate_loss(out.results);
  if (state_.ema) {
    out.log.ema_threshold = threshold;
    state_.ema = server_round_hook(*state_.ema, out.results);
    out.log.ema_after = state_.ema->value;
    for (std::size_t i = 0; i < k; ++i) {
      const HeteroSwitchUpdate& u = switched[i];
      SwitchLog s;
      s.round = round;
      s.client = out.selected[i];
      s.profile = setup_.shards[s.client].profile;
      s.samples = u.result.samples;
      s.initial_loss = u.decision.initial_loss;
      s.train_loss = u.decision.train_loss;
      s.switch1 = u.decision.switch1;
      s.switch2 = u.decision.switch2;
      s.draws = u.result.draws;
      s.hash_before = u.hash_before;
      s.hash_after = u.hash_after;
      s.hash_trained = u.hash_trained;
      out.switches.push_back(s);
    }
  }

  state_.global.params = std::move(next);
  state_.round = round;
  return out;
}

ProfileAccuracy FlServer::evaluate() const {
  ProfileAccuracy pa;
  pa.values.resize(eval_sets_.size());
  for (const auto& p : setup_.cache->profiles()) pa.names.push_back(p.name);
  parallel_for(eval_sets_.size(), threads_,
               [&](std::size_t p) { pa.values[p] = accuracy(state_.global, eval_sets_[p].batch()); });
  return pa;
}

ExperimentReport run_experiment(const FlConfig& cfg, const StrategyConfig& strategy, const ExperimentSetup& setup,
                                const RunOptions& opts) {
  FlServer server(cfg, strategy, setup, opts.threads);
  const std::size_t every = opts.eval_every > 0 ? opts.eval_every : std::max<std::size_t>(1, cfg.rounds / 50);
  ExperimentReport report;
  report.config = opts.config_echo;
  report.strategy = strategy_name(strategy.kind);
  report.seed = cfg.seed;
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    RoundOutcome o = server.run_round();
    if (t % every == 0 || t == cfg.rounds) {
      ProfileAccuracy pa = server.evaluate();
      o.log.accuracy = pa.values;
      if (t == cfg.rounds) report.final_accuracy = std::move(pa);
    }
    if (opts.on_round) opts.on_round(o.log);
    report.rounds.push_back(std::move(o.log));
    report.switches.insert(report.switches.end(), o.switches.begin(), o.switches.end());
  }
  summarize(report);
  report.final_params = server.state().global.params;
  return report;
}

std::shared_ptr<RenderCache> ensure_cache(ExperimentInputs& in) {
  if (!in.cache) in.cache = std::make_shared<RenderCache>(in.base, in.profiles);
  return in.cache;
}

ExperimentSetup make_setup(ExperimentInputs& in, const FlConfig& cfg, std::optional<int> excluded,
                           std::optional<int> only) {
  cfg.validate();
  ExperimentSetup s;
  s.cache = ensure_cache(in);
  s.model = std::make_shared<const ModelSpec>(in.model);
  s.shards = partition(in.base->train_images.size(), cfg.clients, stream_seed(cfg.seed, "partition"));
  const int n_profiles = static_cast<int>(in.profiles.size());
  if (only) {
    if (*only < 0 || *only >= n_profiles) throw std::out_of_range("profile index out of range");
    for (auto& sh : s.shards) sh.profile = *only;
    return s;
  }
  ShareTable table = in.table ? *in.table : ShareTable::uniform(in.profiles);
  if (excluded) {
    if (*excluded < 0 || *excluded >= n_profiles) throw std::out_of_range("excluded profile index out of range");
    const std::string& name = in.profiles[static_cast<std::size_t>(*excluded)].name;
    std::vector<std::pair<std::string, double>> kept;
    double total = 0.0;
    for (const auto& e : table.entries()) {
      if (e.first == name) continue;
      kept.push_back(e);
      total += e.second;
    }
    if (kept.empty() || !(total > 0.0))
      throw std::invalid_argument("excluding '" + name + "' leaves no training profile");
    for (auto& e : kept) e.second /= total;
    table = ShareTable(std::move(kept));
  }
  s.shards = assign_profiles(std::move(s.shards), in.profiles, table, stream_seed(cfg.seed, "assign"));
  return s;
}

DgRun dg_protocol(const FlConfig& cfg, const StrategyConfig& strategy, ExperimentInputs& in, int excluded,
                  const RunOptions& opts) {
  ExperimentSetup setup = make_setup(in, cfg, excluded);
  for (const auto& sh : setup.shards)
    if (sh.profile == excluded) throw std::logic_error("excluded profile assigned to a training client");
  DgRun run;
  run.excluded = excluded;
  run.report = run_experiment(cfg, strategy, setup, opts);
  run.report.excluded_profile = in.profiles[static_cast<std::size_t>(excluded)].name;
  run.ood_accuracy = run.report.final_accuracy.values[static_cast<std::size_t>(excluded)];
  return run;
}

DgSummary dg_sweep(const FlConfig& cfg, const StrategyConfig& strategy, ExperimentInputs& in,
                   const RunOptions& opts) {
  if (in.profiles.size() < 2) throw std::invalid_argument("dg sweep needs at least two profiles");
  DgSummary s;
  for (std::size_t p = 0; p < in.profiles.size(); ++p)
    s.runs.push_back(dg_protocol(cfg, strategy, in, static_cast<int>(p), opts));
  ProfileAccuracy ood;
  for (const auto& r : s.runs) {
    ood.names.push_back(in.profiles[static_cast<std::size_t>(r.excluded)].name);
    ood.values.push_back(r.ood_accuracy);
  }
  const WorstCase w = worst_case(ood);
  s.worst_case_ood = w.accuracy;
  s.worst_profiles = w.profiles;
  return s;
}

MatrixRun degradation_matrix(const FlConfig& cfg, const StrategyConfig& strategy, ExperimentInputs& in,
                             DegradationMode mode, const RunOptions& opts) {
  MatrixRun m;
  std::vector<std::string> names;
  std::vector<std::vector<double>> acc;
  for (std::size_t p = 0; p < in.profiles.size(); ++p) {
    names.push_back(in.profiles[p].name);
    ExperimentSetup setup = make_setup(in, cfg, std::nullopt, static_cast<int>(p));
    ExperimentReport r = run_experiment(cfg, strategy, setup, opts);
    acc.push_back(r.final_accuracy.values);
    m.rows.push_back(std::move(r));
  }
  m.matrix = make_degradation_matrix(std::move(names), std::move(acc), mode);
  return m;
}

}  // namespace hetsim
