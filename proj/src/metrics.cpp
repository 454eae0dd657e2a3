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

#include "hetsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hetsim/nn.hpp"

namespace hetsim {

using ojson = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

FairnessStats fairness_stats(const ProfileAccuracy& pa) {
  if (pa.values.empty()) throw std::invalid_argument("fairness_stats: no profiles");
  const auto n = static_cast<double>(pa.values.size());
  double mean = 0.0;
  for (double a : pa.values) mean += 100.0 * a;
  mean /= n;
  double var = 0.0;
  for (double a : pa.values) var += (100.0 * a - mean) * (100.0 * a - mean);
  return {var / n, mean};
}

WorstCase worst_case(const ProfileAccuracy& pa) {
  if (pa.values.empty()) throw std::invalid_argument("worst_case: no profiles");
  WorstCase w;
  w.accuracy = *std::min_element(pa.values.begin(), pa.values.end());
  for (std::size_t i = 0; i < pa.values.size(); ++i)
    if (pa.values[i] == w.accuracy) w.profiles.push_back(i < pa.names.size() ? pa.names[i] : std::to_string(i));
  return w;
}

double degradation(double acc_self, double acc_cross, DegradationMode mode) {
  if (mode == DegradationMode::kAbsolute) return 100.0 * (acc_self - acc_cross);
  if (acc_self == acc_cross) return 0.0;
  if (!(acc_self > 0.0)) throw std::invalid_argument("degradation: self accuracy must be positive");
  return 100.0 * (acc_self - acc_cross) / acc_self;
}

std::size_t DegradationMatrix::diagonal_dominant_cells() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < accuracy.size(); ++i)
    for (std::size_t j = 0; j < accuracy[i].size(); ++j)
      if (accuracy[i][i] >= accuracy[i][j]) ++n;
  return n;
}

DegradationMatrix make_degradation_matrix(std::vector<std::string> profiles,
                                          std::vector<std::vector<double>> accuracy, DegradationMode mode) {
  const std::size_t n = profiles.size();
  if (accuracy.size() != n) throw std::invalid_argument("degradation matrix: row count mismatch");
  DegradationMatrix m;
  m.profiles = std::move(profiles);
  m.mode = mode;
  m.degradation.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (accuracy[i].size() != n) throw std::invalid_argument("degradation matrix: not square");
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) m.degradation[i][j] = degradation(accuracy[i][i], accuracy[i][j], mode);
  }
  m.accuracy = std::move(accuracy);
  return m;
}

void summarize(ExperimentReport& r) {
  r.fairness = fairness_stats(r.final_accuracy);
  r.worst = worst_case(r.final_accuracy);
}

namespace {

ojson optional_ema(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

double ema_from_json(const ojson& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

std::string csv_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

}  // namespace

ojson report_to_json(const ExperimentReport& r) {
  ojson j;
  j["schema"] = kReportSchema;
  j["strategy"] = r.strategy;
  j["seed"] = r.seed;
  if (r.excluded_profile) j["excluded_profile"] = *r.excluded_profile;
  j["config"] = r.config;

  ojson s;
  ojson acc = ojson::object();
  for (std::size_t i = 0; i < r.final_accuracy.size(); ++i) acc[r.final_accuracy.names[i]] = r.final_accuracy.values[i];
  s["accuracy"] = acc;
  s["mean_pct"] = r.fairness.mean;
  s["variance_pct2"] = r.fairness.variance;
  s["worst_pct"] = 100.0 * r.worst.accuracy;
  s["worst_profiles"] = r.worst.profiles;
  j["summary"] = s;

  ojson rounds = ojson::array();
  for (const RoundLog& l : r.rounds) {
    ojson e;
    e["round"] = l.round;
    e["mean_loss"] = l.mean_loss;
    if (l.ema_threshold) e["ema_threshold"] = optional_ema(*l.ema_threshold);
    if (l.ema_after) e["ema_after"] = *l.ema_after;
    if (l.accuracy) e["accuracy"] = *l.accuracy;
    rounds.push_back(e);
  }
  j["rounds"] = rounds;
  j["switch_rows"] = r.switches.size();
  return j;
}

ExperimentReport report_from_json(const ojson& j) {
  if (j.value("schema", std::string()) != kReportSchema)
    throw std::invalid_argument("report: unsupported schema '" + j.value("schema", std::string()) + "'");
  ExperimentReport r;
  r.strategy = j.at("strategy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("excluded_profile")) r.excluded_profile = j["excluded_profile"].get<std::string>();
  r.config = j.at("config");
  const ojson& s = j.at("summary");
  for (const auto& [name, v] : s.at("accuracy").items()) {
    r.final_accuracy.names.push_back(name);
    r.final_accuracy.values.push_back(v.get<double>());
  }
  summarize(r);
  for (const ojson& e : j.at("rounds")) {
    RoundLog l;
    l.round = e.at("round").get<std::size_t>();
    l.mean_loss = e.at("mean_loss").get<double>();
    if (e.contains("ema_threshold")) l.ema_threshold = ema_from_json(e["ema_threshold"]);
    if (e.contains("ema_after")) l.ema_after = e["ema_after"].get<double>();
    if (e.contains("accuracy")) l.accuracy = e["accuracy"].get<std::vector<double>>();
    r.rounds.push_back(std::move(l));
  }
  // Telemetry rows live in switches.csv only.
  r.switches.resize(j.value("switch_rows", std::size_t{0}));
  return r;
}

std::string rounds_csv(const ExperimentReport& r) {
  std::ostringstream o;
  o << "round,strategy,mean_loss,ema_threshold,ema_after";
  for (const auto& n : r.final_accuracy.names) o << ",acc_" << n;
  o << '\n';
  for (const RoundLog& l : r.rounds) {
    o << l.round << ',' << r.strategy << ',' << format_double(l.mean_loss) << ',' << csv_optional(l.ema_threshold)
      << ',' << csv_optional(l.ema_after);
    for (std::size_t p = 0; p < r.final_accuracy.size(); ++p) {
      o << ',';
      if (l.accuracy) o << format_double((*l.accuracy)[p]);
    }
    o << '\n';
  }
  return o.str();
}

std::string switches_csv(const ExperimentReport& r) {
  std::ostringstream o;
  o << "round,client,profile,samples,initial_loss,train_loss,switch1,switch2,draws,hash_before,hash_after,"
       "hash_trained\n";
  for (const SwitchLog& s : r.switches) {
    o << s.round << ',' << s.client << ',' << s.profile << ',' << s.samples << ',' << format_double(s.initial_loss)
      << ',' << format_double(s.train_loss) << ',' << (s.switch1 ? 1 : 0) << ',' << (s.switch2 ? 1 : 0) << ','
      << s.draws << ',' << hex64(s.hash_before) << ',' << hex64(s.hash_after) << ',' << hex64(s.hash_trained)
      << '\n';
  }
  return o.str();
}

void emit(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_file(dir / "rounds.csv", rounds_csv(r));
  if (!r.switches.empty()) write_file(dir / "switches.csv", switches_csv(r));
  if (!r.final_params.empty()) {
    std::ofstream out(dir / "model.bin", std::ios::binary);
    write_params(out, r.final_params);
  }
}

ojson matrix_to_json(const DegradationMatrix& m) {
  ojson j;
  j["schema"] = "hetsim.matrix/1";
  j["mode"] = m.mode == DegradationMode::kRelative ? "relative" : "absolute";
  j["profiles"] = m.profiles;
  j["accuracy"] = m.accuracy;
  j["degradation"] = m.degradation;
  j["diagonal_dominant_cells"] = m.diagonal_dominant_cells();
  return j;
}

std::string matrix_csv(const DegradationMatrix& m) {
  std::ostringstream o;
  o << "train_on";
  for (const auto& n : m.profiles) o << ",test_" << n;
  o << '\n';
  for (std::size_t i = 0; i < m.profiles.size(); ++i) {
    o << m.profiles[i];
    for (std::size_t j = 0; j < m.profiles.size(); ++j) o << ',' << format_double(m.degradation[i][j]);
    o << '\n';
  }
  return o.str();
}

}  // namespace hetsim
