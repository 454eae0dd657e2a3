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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hetsim/experiment.hpp"
#include "json.hpp"

namespace hetsim {

enum class RunMode { kStandard, kDgSweep, kDegradationMatrix };

struct SyntheticSource {
  int train = 4000;
  int test = 1000;
  int classes = 4;
  int height = 16;
  int width = 16;
};

struct DatasetSource {
  enum class Kind { kSynthetic, kCifar, kContainer } kind = Kind::kSynthetic;
  SyntheticSource synthetic;
  std::filesystem::path train_path;  // cifar
  std::filesystem::path test_path;   // cifar
  CifarVariant variant = CifarVariant::kCifar100;
  std::filesystem::path container;   // dataset container file
};

struct ProfileSource {
  // Either generated (count + ranges, optional names) or an explicit list.
  int count = 10;
  ProfileRanges ranges;
  std::vector<std::string> names;
  std::vector<DeviceProfile> explicit_list;
};

struct ExperimentConfig {
  DatasetSource dataset;
  ProfileSource profiles;
  // Empty: uniform. "market-share" or explicit entries otherwise.
  std::optional<ShareTable> share_table;
  std::string share_table_name = "uniform";
  FlConfig fl;
  StrategyConfig strategy;
  RunMode mode = RunMode::kStandard;
  DegradationMode degradation = DegradationMode::kRelative;
  std::optional<ModelSpec> model;
  std::size_t eval_every = 0;
  std::filesystem::path output_dir = "out";

  // Canonical, fully resolved form; echoed into every report.
  nlohmann::ordered_json resolved;
};

// Raised for invalid configuration; the message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<std::string> preset_names();
nlohmann::json preset(const std::string& name);

struct ConfigOverrides {
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
};

// user is merged over the preset (if any); throws ConfigError.
ExperimentConfig resolve_config(const nlohmann::json& user, const ConfigOverrides& over = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& over = {});

// Materialises dataset, profiles and share table. Uses the "data" and
// "profiles" streams of the master seed.
ExperimentInputs build_inputs(const ExperimentConfig& cfg);

struct CliOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::string> preset;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::size_t samples = 4;  // dump-samples
};

// Exit codes: 0 success, 2 invalid configuration, 1 runtime failure.
int cmd_run(const CliOptions& o, std::ostream& log, std::ostream& err);
int cmd_matrix(const CliOptions& o, std::ostream& log, std::ostream& err);
int cmd_dg(const CliOptions& o, std::ostream& log, std::ostream& err);
int cmd_dump_samples(const CliOptions& o, std::ostream& log, std::ostream& err);
int cmd_validate(const CliOptions& o, std::ostream& log, std::ostream& err);

}  // namespace hetsim
