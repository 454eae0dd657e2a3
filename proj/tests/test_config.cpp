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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetsim/config.hpp"
#include "hetsim/isp.hpp"

namespace hetsim {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("hetsim_cfg_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json tiny_config() {
  return json::parse(R"({
    "seed": 3,
    "dataset": {"synthetic": {"train": 200, "test": 40, "classes": 4, "height": 8, "width": 8}},
    "profiles": {"count": 3},
    "fl": {"clients": 5, "per_round": 2, "batch": 10, "epochs": 1, "rounds": 2, "lr": 0.1},
    "strategy": {"name": "heteroswitch"}
  })");
}

fs::path write_config(const fs::path& dir, const json& j) {
  fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string error_of(const json& j) {
  try {
    resolve_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, FlPresetEcho) {
  ExperimentConfig c = resolve_config(json::object(), {.preset = "fl-defaults"});
  EXPECT_EQ(c.fl.clients, 100u);
  EXPECT_EQ(c.fl.per_round, 20u);
  EXPECT_EQ(c.fl.batch, 10u);
  EXPECT_EQ(c.fl.epochs, 1u);
  EXPECT_EQ(c.fl.rounds, 1000u);
  EXPECT_DOUBLE_EQ(c.fl.lr, 0.1);
  EXPECT_EQ(c.resolved["fl"]["clients"], 100);
  EXPECT_EQ(c.resolved["fl"]["rounds"], 1000);
  EXPECT_EQ(c.resolved["preset"], "fl-defaults");
}

TEST(ConfigTest, EveryPresetResolves) {
  for (const auto& name : preset_names()) EXPECT_NO_THROW(resolve_config(json::object(), {.preset = name})) << name;
  EXPECT_THROW(resolve_config(json::object(), {.preset = "nope"}), ConfigError);
}

TEST(ConfigTest, DeskPresetHasTenProfiles) {
  ExperimentConfig c = resolve_config(json::object(), {.preset = "synthetic-10-profiles"});
  c.dataset.synthetic.train = 500;
  c.dataset.synthetic.test = 40;
  ExperimentInputs in = build_inputs(c);
  EXPECT_EQ(in.profiles.size(), 10u);
}

TEST(ConfigTest, UserOverridesPreset) {
  json j = {{"fl", {{"rounds", 7}}}, {"strategy", {{"name", "fedprox"}, {"mu", 0.5}}}};
  ExperimentConfig c = resolve_config(j, {.preset = "synthetic-10-profiles", .seed = 99});
  EXPECT_EQ(c.fl.rounds, 7u);
  EXPECT_EQ(c.fl.clients, 50u);
  EXPECT_EQ(c.fl.seed, 99u);
  EXPECT_EQ(c.strategy.kind, StrategyKind::kFedProx);
  EXPECT_DOUBLE_EQ(c.strategy.mu, 0.5);
}

TEST(ConfigTest, ErrorsNameTheField) {
  json j = tiny_config();
  j["fl"]["per_round"] = 6;
  EXPECT_NE(error_of(j).find("fl.per_round"), std::string::npos);

  j = tiny_config();
  j["strategy"] = {{"name", "fedavg"}, {"mu", 0.1}};
  EXPECT_NE(error_of(j).find("strategy.mu"), std::string::npos);

  j = tiny_config();
  j["dataset"]["container"] = "x.bin";
  EXPECT_NE(error_of(j).find("dataset"), std::string::npos);

  j = tiny_config();
  j["dataset"] = json::object();
  EXPECT_NE(error_of(j).find("dataset"), std::string::npos);

  j = tiny_config();
  j["fl"]["bogus"] = 1;
  EXPECT_NE(error_of(j).find("bogus"), std::string::npos);

  j = tiny_config();
  j["share_table"] = json::array({{{"name", "nobody"}, {"share", 1.0}}});
  EXPECT_FALSE(error_of(j).empty());

  j = tiny_config();
  j["strategy"] = {{"name", "fedsomething"}};
  EXPECT_FALSE(error_of(j).empty());
}

TEST(ConfigTest, QffflLipschitzDefaultsToInverseRate) {
  json j = tiny_config();
  j["strategy"] = {{"name", "qfedavg"}, {"q", 0.5}};
  ExperimentConfig c = resolve_config(j);
  EXPECT_DOUBLE_EQ(c.strategy.q, 0.5);
  EXPECT_DOUBLE_EQ(c.strategy.lipschitz, 10.0);
}

TEST(CliTest, PerRoundAboveClientsExitsTwo) {
  fs::path dir = scratch("k_gt_n");
  json j = tiny_config();
  j["fl"]["per_round"] = 9;
  CliOptions o;
  o.config = write_config(dir, j);
  o.out = dir / "out";
  std::ostringstream log, err;
  EXPECT_EQ(cmd_run(o, log, err), 2);
  EXPECT_NE(err.str().find("fl.per_round"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out" / "report.json"));
  fs::remove_all(dir);
}

TEST(CliTest, ValidatePrintsResolvedConfig) {
  CliOptions o;
  o.preset = "degradation-matrix-3";
  std::ostringstream log, err;
  EXPECT_EQ(cmd_validate(o, log, err), 0);
  json j = json::parse(log.str());
  EXPECT_EQ(j["mode"], "degradation-matrix");
  EXPECT_EQ(j["profiles"]["list"].size(), 3u);
}

TEST(CliTest, DumpSamples) {
  fs::path dir = scratch("dump");
  CliOptions o;
  o.config = write_config(dir, tiny_config());
  o.out = dir / "out";
  o.samples = 0;
  std::ostringstream log, err;
  ASSERT_EQ(cmd_dump_samples(o, log, err), 0) << err.str();
  EXPECT_FALSE(fs::exists(dir / "out" / "samples"));

  o.samples = 3;
  ASSERT_EQ(cmd_dump_samples(o, log, err), 0) << err.str();
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "out" / "samples")) files += e.is_regular_file();
  EXPECT_EQ(files, 9u);

  ExperimentInputs in = build_inputs(load_config(*o.config));
  for (std::size_t i = 0; i < 3; ++i) {
    std::ostringstream want;
    write_ppm(want, in.base->train_images[i]);
    char name[16];
    std::snprintf(name, sizeof name, "%05zu.ppm", i);
    EXPECT_EQ(slurp(dir / "out" / "samples" / in.profiles[0].name / name), want.str());
  }
  fs::remove_all(dir);
}

TEST(CliTest, DgNeedsTwoProfiles) {
  fs::path dir = scratch("dg1");
  json j = tiny_config();
  j["profiles"]["count"] = 1;
  CliOptions o;
  o.config = write_config(dir, j);
  o.out = dir / "out";
  std::ostringstream log, err;
  EXPECT_EQ(cmd_dg(o, log, err), 2);
  fs::remove_all(dir);
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> t;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) t[fs::relative(e.path(), root).string()] = slurp(e.path());
  return t;
}

TEST(CliTest, OutputTreeIndependentOfThreads) {
  fs::path dir = scratch("threads");
  json j = tiny_config();
  j["fl"]["rounds"] = 3;
  CliOptions o;
  o.config = write_config(dir, j);
  std::ostringstream log, err;
  o.out = dir / "one";
  ASSERT_EQ(cmd_run(o, log, err), 0) << err.str();
  o.out = dir / "four";
  o.threads = 4;
  ASSERT_EQ(cmd_run(o, log, err), 0) << err.str();
  auto a = tree(dir / "one"), b = tree(dir / "four");
  EXPECT_EQ(a.size(), 4u);
  EXPECT_EQ(a, b);
  fs::remove_all(dir);
}

TEST(CliTest, MatrixAndDgTrees) {
  fs::path dir = scratch("modes");
  json j = tiny_config();
  j["strategy"] = {{"name", "fedavg"}};
  CliOptions o;
  o.config = write_config(dir, j);
  std::ostringstream log, err;
  o.out = dir / "m";
  ASSERT_EQ(cmd_matrix(o, log, err), 0) << err.str();
  EXPECT_TRUE(fs::exists(dir / "m" / "matrix.json"));
  EXPECT_TRUE(fs::exists(dir / "m" / "matrix.csv"));
  o.out = dir / "d";
  ASSERT_EQ(cmd_dg(o, log, err), 0) << err.str();
  json s = json::parse(slurp(dir / "d" / "dg_summary.json"));
  EXPECT_EQ(s["schema"], "hetsim.dg/1");
  fs::remove_all(dir);
}

}  // namespace
}  // namespace hetsim
