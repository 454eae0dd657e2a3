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
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace hetsim {

// Accuracy in [0, 1] for every evaluation profile, in profile order.
struct ProfileAccuracy {
  std::vector<std::string> names;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

// Both in percentage points: mean of 100 * acc, population variance of 100 * acc.
struct FairnessStats {
  double variance = 0.0;
  double mean = 0.0;
};

FairnessStats fairness_stats(const ProfileAccuracy& pa);

struct WorstCase {
  double accuracy = 0.0;
  std::vector<std::string> profiles;  // every profile attaining the minimum
};
WorstCase worst_case(const ProfileAccuracy& pa);

enum class DegradationMode { kRelative, kAbsolute };

// Relative: 100 * (self - cross) / self percent. Absolute: 100 * (self - cross)
// percentage points. Negative when the cross domain does better.
double degradation(double acc_self, double acc_cross, DegradationMode mode = DegradationMode::kRelative);

struct DegradationMatrix {
  std::vector<std::string> profiles;
  std::vector<std::vector<double>> accuracy;     // [train][test]
  std::vector<std::vector<double>> degradation;  // [train][test], diagonal 0
  DegradationMode mode = DegradationMode::kRelative;

  // Cells (i, j) with accuracy[i][i] >= accuracy[i][j]; diagonal cells count.
  std::size_t diagonal_dominant_cells() const;
};

DegradationMatrix make_degradation_matrix(std::vector<std::string> profiles,
                                          std::vector<std::vector<double>> accuracy, DegradationMode mode);

struct RoundLog {
  std::size_t round = 0;
  double mean_loss = 0.0;                 // sample-weighted client train loss
  std::optional<double> ema_threshold;    // L_EMA broadcast this round (HeteroSwitch)
  std::optional<double> ema_after;        // tracker value after the server hook
  std::optional<std::vector<double>> accuracy;  // per profile, on evaluation rounds
};

struct SwitchLog {
  std::size_t round = 0;
  std::uint32_t client = 0;
  int profile = -1;
  std::size_t samples = 0;
  double initial_loss = 0.0;
  double train_loss = 0.0;
  bool switch1 = false;
  bool switch2 = false;
  std::uint64_t draws = 0;
  std::uint64_t hash_before = 0;
  std::uint64_t hash_after = 0;
  std::uint64_t hash_trained = 0;
};

struct ExperimentReport {
  nlohmann::ordered_json config;  // echo of the resolved configuration
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<RoundLog> rounds;
  std::vector<SwitchLog> switches;
  ProfileAccuracy final_accuracy;
  FairnessStats fairness;
  WorstCase worst;
  std::optional<std::string> excluded_profile;  // leave-one-out runs
  std::vector<double> final_params;
};

// Recomputes fairness/worst from final_accuracy.
void summarize(ExperimentReport& report);

inline constexpr const char* kReportSchema = "hetsim.report/1";

nlohmann::ordered_json report_to_json(const ExperimentReport& r);
ExperimentReport report_from_json(const nlohmann::ordered_json& j);

std::string rounds_csv(const ExperimentReport& r);
std::string switches_csv(const ExperimentReport& r);

// Writes report.json, rounds.csv, switches.csv (when telemetry exists) and
// model.bin into dir.
void emit(const ExperimentReport& r, const std::filesystem::path& dir);

nlohmann::ordered_json matrix_to_json(const DegradationMatrix& m);
std::string matrix_csv(const DegradationMatrix& m);

// "%.17g"; round-trips every finite double.
std::string format_double(double v);

}  // namespace hetsim
