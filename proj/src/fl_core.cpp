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

#include "hetsim/fl_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hetsim {

void FlConfig::validate() const {
  if (clients < 1) throw std::invalid_argument("fl.clients (N) must be >= 1");
  if (per_round < 1 || per_round > clients)
    throw std::invalid_argument("fl.per_round (K) must satisfy 1 <= K <= N (K=" + std::to_string(per_round) +
                                ", N=" + std::to_string(clients) + ")");
  if (batch < 1) throw std::invalid_argument("fl.batch (B) must be >= 1");
  if (epochs < 1) throw std::invalid_argument("fl.epochs (E) must be >= 1");
  if (rounds < 1) throw std::invalid_argument("fl.rounds (T) must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("fl.lr (eta) must be > 0");
}

std::vector<std::uint32_t> select_clients(std::size_t n, std::size_t k, std::size_t round, std::uint64_t seed) {
  if (k < 1 || k > n) throw std::invalid_argument("select_clients: need 1 <= K <= N");
  std::vector<std::uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0u);
  RngStream rng(stream_seed(seed, "selection", round));
  for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + rng.below(n - i)]);
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::vector<std::size_t>> epoch_orders(std::size_t n, std::size_t epochs, RngStream& rng) {
  std::vector<std::vector<std::size_t>> out(epochs, std::vector<std::size_t>(n));
  for (auto& order : out) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  return out;
}

LocalRun local_sgd(const ModelState& start, const SampleSet& data, const FlConfig& cfg,
                   const std::vector<std::vector<std::size_t>>& orders, const LocalHooks& hooks) {
  if (data.size() == 0) throw std::invalid_argument("local training on an empty dataset");
  LocalRun run{start, 0.0, 0};
  std::size_t idx = 0;
  for (std::size_t e = 0; e < orders.size(); ++e) {
    const auto& order = orders[e];
    for (std::size_t off = 0; off < order.size(); off += cfg.batch) {
      const std::size_t len = std::min(cfg.batch, order.size() - off);
      const Batch b = data.batch(std::span<const std::size_t>(order).subspan(off, len));
      BackwardResult br = backward(run.final_state, b);
      if (!std::isfinite(br.loss)) throw std::runtime_error("local training diverged (non-finite loss)");
      run.train_loss = (run.train_loss * static_cast<double>(idx) + br.loss) / static_cast<double>(idx + 1);
      if (hooks.adjust) hooks.adjust(run.final_state, br.grad);
      sgd_step_inplace(run.final_state, br.grad, cfg.lr);
      if (hooks.after_step) hooks.after_step(run.final_state, e, idx);
      ++idx;
    }
    if (hooks.after_epoch) hooks.after_epoch(run.final_state, e);
  }
  run.steps = idx;
  for (double v : run.final_state.params)
    if (!std::isfinite(v)) throw std::runtime_error("local training produced non-finite parameters");
  return run;
}

ClientUpdateResult fedavg_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                                 RngStream& rng) {
  const auto start = rng.draws();
  const auto orders = epoch_orders(data.size(), cfg.epochs, rng);
  LocalRun run = local_sgd(global, data, cfg, orders);
  ClientUpdateResult r;
  r.params = std::move(run.final_state.params);
  r.train_loss = run.train_loss;
  r.samples = data.size();
  r.steps = run.steps;
  r.draws = rng.draws() - start;
  return r;
}

std::vector<double> fedavg_aggregate(std::span<const ClientUpdateResult> results) {
  if (results.empty()) throw std::invalid_argument("fedavg_aggregate: no results");
  std::vector<const ClientUpdateResult*> sorted;
  for (const auto& r : results) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->client < b->client; });
  const std::size_t dim = sorted.front()->params.size();
  std::vector<double> acc(dim, 0.0);
  double total = 0.0;
  for (const auto* r : sorted) {
    if (r->params.size() != dim) throw std::invalid_argument("fedavg_aggregate: params length mismatch");
    const auto n = static_cast<double>(r->samples);
    for (std::size_t j = 0; j < dim; ++j) acc[j] += n * r->params[j];
    total += n;
  }
  if (!(total > 0.0)) throw std::invalid_argument("fedavg_aggregate: zero total sample count");
  for (double& v : acc) v /= total;
  return acc;
}

ClientUpdateResult fedprox_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                                  double mu, RngStream& rng) {
  if (!(mu >= 0.0)) throw std::invalid_argument("fedprox: mu must be >= 0");
  const auto start = rng.draws();
  const auto orders = epoch_orders(data.size(), cfg.epochs, rng);
  LocalHooks hooks;
  if (mu != 0.0) {
    hooks.adjust = [&](const ModelState& w, Gradient& g) {
      for (std::size_t j = 0; j < g.values.size(); ++j) g.values[j] += mu * (w.params[j] - global.params[j]);
    };
  }
  LocalRun run = local_sgd(global, data, cfg, orders, hooks);
  ClientUpdateResult r;
  r.params = std::move(run.final_state.params);
  r.train_loss = run.train_loss;
  r.samples = data.size();
  r.steps = run.steps;
  r.draws = rng.draws() - start;
  return r;
}

ClientUpdateResult qfedavg_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                                  RngStream& rng) {
  const double f = dataset_loss(global, data.batch());
  ClientUpdateResult r = fedavg_client(global, data, cfg, rng);
  r.initial_loss = f;
  return r;
}

std::vector<double> qfedavg_aggregate(std::span<const double> global, std::span<const ClientUpdateResult> results,
                                      double q, double lipschitz) {
  if (!(q >= 0.0)) throw std::invalid_argument("q-FedAvg: q must be >= 0");
  if (!(lipschitz > 0.0)) throw std::invalid_argument("q-FedAvg: L must be > 0");
  if (results.empty()) throw std::invalid_argument("q-FedAvg: no results");
  std::vector<const ClientUpdateResult*> sorted;
  for (const auto& r : results) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->client < b->client; });

  const std::size_t dim = global.size();
  std::vector<double> num(dim, 0.0);
  double h_sum = 0.0;
  std::vector<double> delta(dim);
  for (const auto* r : sorted) {
    if (r->params.size() != dim) throw std::invalid_argument("q-FedAvg: params length mismatch");
    if (!std::isfinite(r->initial_loss)) throw std::invalid_argument("q-FedAvg: client result lacks F_k");
    const double f = r->initial_loss > 0.0 ? r->initial_loss : 1e-12;
    const double fq = std::pow(f, q);
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      delta[j] = lipschitz * (global[j] - r->params[j]);
      sq += delta[j] * delta[j];
      num[j] += fq * delta[j];
    }
    h_sum += q * std::pow(f, q - 1.0) * sq + lipschitz * fq;
  }
  std::vector<double> out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = global[j] - num[j] / h_sum;
  return out;
}

ScaffoldUpdate scaffold_client(const ModelState& global, const SampleSet& data, const FlConfig& cfg,
                               std::span<const double> c_server, std::span<const double> c_client, RngStream& rng) {
  const std::size_t dim = global.params.size();
  if (c_server.size() != dim || c_client.size() != dim)
    throw std::invalid_argument("scaffold: control variate length mismatch");
  std::vector<double> correction(dim);
  bool any = false;
  for (std::size_t j = 0; j < dim; ++j) {
    correction[j] = c_server[j] - c_client[j];
    any = any || correction[j] != 0.0;
  }
  const auto start = rng.draws();
  const auto orders = epoch_orders(data.size(), cfg.epochs, rng);
  LocalHooks hooks;
  if (any) {
    hooks.adjust = [&](const ModelState&, Gradient& g) {
      for (std::size_t j = 0; j < dim; ++j) g.values[j] += correction[j];
    };
  }
  LocalRun run = local_sgd(global, data, cfg, orders, hooks);

  ScaffoldUpdate u;
  const double scale = 1.0 / (static_cast<double>(run.steps) * cfg.lr);
  u.control.resize(dim);
  u.control_delta.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    u.control[j] = (c_client[j] - c_server[j]) + (global.params[j] - run.final_state.params[j]) * scale;
    u.control_delta[j] = u.control[j] - c_client[j];
  }
  u.result.params = std::move(run.final_state.params);
  u.result.train_loss = run.train_loss;
  u.result.samples = data.size();
  u.result.steps = run.steps;
  u.result.draws = rng.draws() - start;
  return u;
}

void scaffold_server_update(std::vector<double>& c_server, std::span<const ScaffoldUpdate> updates,
                            std::size_t total_clients) {
  if (updates.empty()) return;
  std::vector<const ScaffoldUpdate*> sorted;
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->result.client < b->result.client; });
  const double k = static_cast<double>(updates.size());
  const double frac = k / static_cast<double>(total_clients);
  for (std::size_t j = 0; j < c_server.size(); ++j) {
    double sum = 0.0;
    for (const auto* u : sorted) sum += u->control_delta[j];
    c_server[j] += frac * (sum / k);
  }
}

double aggregate_loss(std::span<const ClientUpdateResult> results) {
  if (results.empty()) throw std::invalid_argument("aggregate_loss: no results");
  std::vector<const ClientUpdateResult*> sorted;
  for (const auto& r : results) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->client < b->client; });
  double num = 0.0;
  double den = 0.0;
  for (const auto* r : sorted) {
    num += static_cast<double>(r->samples) * r->train_loss;
    den += static_cast<double>(r->samples);
  }
  return num / den;
}

}  // namespace hetsim
