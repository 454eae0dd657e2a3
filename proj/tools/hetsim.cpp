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

// hetsim: command-line front end.
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hetsim/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator with per-device ISP heterogeneity"};
  app.require_subcommand(1);

  hetsim::CliOptions opts;
  std::string config, out, preset;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--preset", preset, "Named preset; --config values override it");
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--threads", opts.threads, "Worker threads for client updates")->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "Run the configured experiment");
  auto* matrix = app.add_subcommand("matrix", "Train per profile and cross-evaluate");
  auto* dg = app.add_subcommand("dg", "Leave-one-profile-out sweep");
  auto* dump = app.add_subcommand("dump-samples", "Write rendered samples as PPM");
  auto* validate = app.add_subcommand("validate", "Print the resolved configuration");
  auto* presets = app.add_subcommand("presets", "List preset names");
  for (auto* s : {run, matrix, dg, dump, validate}) add_common(s);
  dump->add_option("-n,--samples", opts.samples, "Samples per profile");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (presets->parsed()) {
    for (const auto& n : hetsim::preset_names()) std::cout << n << '\n';
    return 0;
  }
  if (!config.empty()) opts.config = config;
  if (!preset.empty()) opts.preset = preset;
  if (!out.empty()) opts.out = out;
  if (app.get_subcommands().front()->count("--seed")) opts.seed = seed;

  if (run->parsed()) return hetsim::cmd_run(opts, std::cout, std::cerr);
  if (matrix->parsed()) return hetsim::cmd_matrix(opts, std::cout, std::cerr);
  if (dg->parsed()) return hetsim::cmd_dg(opts, std::cout, std::cerr);
  if (dump->parsed()) return hetsim::cmd_dump_samples(opts, std::cout, std::cerr);
  return hetsim::cmd_validate(opts, std::cout, std::cerr);
}
