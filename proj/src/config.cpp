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

#include "hetsim/config.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "hetsim/rng.hpp"

namespace hetsim {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads fields of one JSON object, remembering which keys were consumed so
// leftovers can be reported by their full path.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) throw ConfigError(where(key) + " must be a non-negative integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const json& object() const { return j_; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError("unknown field " + where(k));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

Interval read_interval(Fields& f, const std::string& key, Interval fallback) {
  if (!f.has(key)) return fallback;
  const json& v = f.raw(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(f.where(key) + " must be [lo, hi]");
  Interval iv{v[0].get<double>(), v[1].get<double>()};
  if (!(iv.lo <= iv.hi)) throw ConfigError(f.where(key) + " must satisfy lo <= hi");
  return iv;
}

std::optional<int> read_quant(Fields& f, const std::string& key) {
  if (!f.has(key) || f.raw(key).is_null()) {
    if (f.has(key)) f.raw(key);
    return std::nullopt;
  }
  int q = f.get<int>(key, 0);
  if (q < 2) throw ConfigError(f.where(key) + " must be >= 2 or null");
  return q;
}

DeviceProfile read_profile(const json& j, const std::string& path) {
  Fields f(j, path);
  DeviceProfile p;
  p.name = f.get<std::string>("name", "");
  if (p.name.empty()) throw ConfigError(f.where("name") + " is required");
  if (f.has("wb")) {
    const json& wb = f.raw("wb");
    if (!wb.is_array() || wb.size() != 3) throw ConfigError(f.where("wb") + " must be [r1, r2, r3]");
    p.wb = {wb[0].get<double>(), wb[1].get<double>(), wb[2].get<double>()};
  }
  p.gamma = f.get<double>("gamma", 1.0);
  p.contrast = f.get<double>("contrast", 1.0);
  p.brightness = f.get<double>("brightness", 0.0);
  p.saturation = f.get<double>("saturation", 1.0);
  p.hue_shift = f.get<double>("hue_shift", 0.0);
  p.quant_levels = read_quant(f, "quant_levels");
  f.finish();
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return p;
}

ordered_json profile_to_json(const DeviceProfile& p) {
  ordered_json j;
  j["name"] = p.name;
  j["wb"] = {p.wb.r1, p.wb.r2, p.wb.r3};
  j["gamma"] = p.gamma;
  j["contrast"] = p.contrast;
  j["brightness"] = p.brightness;
  j["saturation"] = p.saturation;
  j["hue_shift"] = p.hue_shift;
  j["quant_levels"] = p.quant_levels ? ordered_json(*p.quant_levels) : ordered_json(nullptr);
  return j;
}

ordered_json interval_json(const Interval& iv) { return ordered_json::array({iv.lo, iv.hi}); }

const std::vector<std::string> kMarketNames = {"S22", "VELVET", "Pixel5", "S9", "G7", "Pixel2", "S6", "G4", "Nexus5X"};

// Three profiles far apart in colour and tone, for the degradation matrix.
json distinct_profiles() {
  return json::array({
      {{"name", "neutral"}},
      {{"name", "warm-dark"}, {"wb", {1.6, 1.0, 0.55}}, {"gamma", 1.8}, {"contrast", 0.7}, {"hue_shift", 60.0}},
      {{"name", "cool-bright"}, {"wb", {0.55, 0.9, 1.6}}, {"gamma", 0.5}, {"saturation", 0.3}, {"hue_shift", -90.0}},
  });
}

json desk_base() {
  return {
      {"seed", 1},
      {"mode", "standard"},
      {"dataset", {{"synthetic", {{"train", 4000}, {"test", 1000}, {"classes", 4}, {"height", 16}, {"width", 16}}}}},
      {"profiles", {{"count", 10}}},
      {"share_table", "uniform"},
      {"fl", {{"clients", 50}, {"per_round", 10}, {"batch", 10}, {"epochs", 1}, {"rounds", 200}, {"lr", 0.1}}},
      {"strategy", {{"name", "heteroswitch"}, {"alpha", 0.9}, {"wb_degree", 0.001}, {"gamma_degree", 0.9}}},
  };
}

std::string mode_name(RunMode m) {
  switch (m) {
    case RunMode::kStandard: return "standard";
    case RunMode::kDgSweep: return "dg-sweep";
    case RunMode::kDegradationMatrix: return "degradation-matrix";
  }
  return "?";
}

void parse_dataset(Fields& top, ExperimentConfig& cfg, ordered_json& echo) {
  if (!top.has("dataset")) throw ConfigError("dataset is required");
  Fields f(top.raw("dataset"), "dataset");
  int sources = int(f.has("synthetic")) + int(f.has("cifar")) + int(f.has("container"));
  if (sources != 1) throw ConfigError("dataset must name exactly one source (synthetic, cifar or container)");
  ordered_json e;
  if (f.has("synthetic")) {
    Fields s(f.raw("synthetic"), "dataset.synthetic");
    SyntheticSource& src = cfg.dataset.synthetic;
    cfg.dataset.kind = DatasetSource::Kind::kSynthetic;
    src.train = s.get<int>("train", src.train);
    src.test = s.get<int>("test", src.test);
    src.classes = s.get<int>("classes", src.classes);
    src.height = s.get<int>("height", src.height);
    src.width = s.get<int>("width", src.width);
    s.finish();
    if (src.classes < 2 || src.classes > kSyntheticFamilies)
      throw ConfigError("dataset.synthetic.classes must be in [2, " + std::to_string(kSyntheticFamilies) + "]");
    if (src.train < 2 * src.classes) throw ConfigError("dataset.synthetic.train must give >= 2 samples per class");
    if (src.test < src.classes) throw ConfigError("dataset.synthetic.test must give >= 1 sample per class");
    if (src.height < 4 || src.width < 4) throw ConfigError("dataset.synthetic.height/width must be >= 4");
    e["synthetic"] = {{"train", src.train}, {"test", src.test}, {"classes", src.classes},
                      {"height", src.height}, {"width", src.width}};
  } else if (f.has("cifar")) {
    Fields c(f.raw("cifar"), "dataset.cifar");
    cfg.dataset.kind = DatasetSource::Kind::kCifar;
    cfg.dataset.train_path = c.get<std::string>("train", "");
    cfg.dataset.test_path = c.get<std::string>("test", "");
    std::string variant = c.get<std::string>("variant", "");
    c.finish();
    if (cfg.dataset.train_path.empty()) throw ConfigError("dataset.cifar.train is required");
    if (cfg.dataset.test_path.empty()) throw ConfigError("dataset.cifar.test is required");
    if (variant == "cifar10") {
      cfg.dataset.variant = CifarVariant::kCifar10;
    } else if (variant == "cifar100") {
      cfg.dataset.variant = CifarVariant::kCifar100;
    } else {
      throw ConfigError("dataset.cifar.variant must be \"cifar10\" or \"cifar100\"");
    }
    e["cifar"] = {{"train", cfg.dataset.train_path.string()}, {"test", cfg.dataset.test_path.string()},
                  {"variant", variant}};
  } else {
    cfg.dataset.kind = DatasetSource::Kind::kContainer;
    cfg.dataset.container = f.get<std::string>("container", "");
    if (cfg.dataset.container.empty()) throw ConfigError("dataset.container must be a path");
    e["container"] = cfg.dataset.container.string();
  }
  f.finish();
  echo["dataset"] = e;
}

void parse_profiles(Fields& top, ExperimentConfig& cfg, ordered_json& echo) {
  ProfileSource& ps = cfg.profiles;
  ordered_json e;
  if (top.has("profiles")) {
    Fields f(top.raw("profiles"), "profiles");
    if (f.has("list")) {
      if (f.has("count") || f.has("ranges") || f.has("names"))
        throw ConfigError("profiles.list cannot be combined with count, ranges or names");
      const json& list = f.raw("list");
      if (!list.is_array() || list.empty()) throw ConfigError("profiles.list must be a non-empty array");
      std::set<std::string> seen;
      for (std::size_t i = 0; i < list.size(); ++i) {
        ps.explicit_list.push_back(read_profile(list[i], "profiles.list[" + std::to_string(i) + "]"));
        if (!seen.insert(ps.explicit_list.back().name).second)
          throw ConfigError("profiles.list[" + std::to_string(i) + "].name duplicates an earlier profile");
      }
    } else {
      ps.count = f.get<int>("count", ps.count);
      if (ps.count < 1) throw ConfigError("profiles.count must be >= 1");
      if (f.has("ranges")) {
        Fields r(f.raw("ranges"), "profiles.ranges");
        ps.ranges.contrast = read_interval(r, "contrast", ps.ranges.contrast);
        ps.ranges.brightness = read_interval(r, "brightness", ps.ranges.brightness);
        ps.ranges.saturation = read_interval(r, "saturation", ps.ranges.saturation);
        ps.ranges.hue = read_interval(r, "hue", ps.ranges.hue);
        ps.ranges.wb_gain = read_interval(r, "wb_gain", ps.ranges.wb_gain);
        ps.ranges.gamma = read_interval(r, "gamma", ps.ranges.gamma);
        ps.ranges.quant_levels = read_quant(r, "quant_levels");
        r.finish();
      }
      if (f.has("names")) {
        const json& names = f.raw("names");
        if (!names.is_array() || names.size() != static_cast<std::size_t>(ps.count))
          throw ConfigError("profiles.names must list exactly profiles.count names");
        std::set<std::string> seen;
        for (const auto& n : names) {
          if (!n.is_string()) throw ConfigError("profiles.names must contain strings");
          if (!seen.insert(n.get<std::string>()).second) throw ConfigError("profiles.names contains a duplicate");
          ps.names.push_back(n.get<std::string>());
        }
      }
    }
    f.finish();
  }
  if (!ps.explicit_list.empty()) {
    for (const auto& p : ps.explicit_list) e["list"].push_back(profile_to_json(p));
  } else {
    e["count"] = ps.count;
    e["ranges"] = {{"contrast", interval_json(ps.ranges.contrast)},
                   {"brightness", interval_json(ps.ranges.brightness)},
                   {"saturation", interval_json(ps.ranges.saturation)},
                   {"hue", interval_json(ps.ranges.hue)},
                   {"wb_gain", interval_json(ps.ranges.wb_gain)},
                   {"gamma", interval_json(ps.ranges.gamma)},
                   {"quant_levels", ps.ranges.quant_levels ? ordered_json(*ps.ranges.quant_levels)
                                                           : ordered_json(nullptr)}};
    if (!ps.names.empty()) e["names"] = ps.names;
  }
  echo["profiles"] = e;
}

std::vector<std::string> profile_names(const ProfileSource& ps) {
  std::vector<std::string> out;
  if (!ps.explicit_list.empty()) {
    for (const auto& p : ps.explicit_list) out.push_back(p.name);
  } else if (!ps.names.empty()) {
    out = ps.names;
  } else {
    char name[32];
    for (int i = 0; i < ps.count; ++i) {
      std::snprintf(name, sizeof name, "device-%02d", i);
      out.push_back(name);
    }
  }
  return out;
}

void parse_share_table(Fields& top, ExperimentConfig& cfg, ordered_json& echo) {
  auto names = profile_names(cfg.profiles);
  std::set<std::string> known(names.begin(), names.end());
  if (!top.has("share_table")) {
    echo["share_table"] = "uniform";
    return;
  }
  const json& t = top.raw("share_table");
  std::vector<std::pair<std::string, double>> entries;
  if (t.is_string()) {
    std::string s = t.get<std::string>();
    if (s == "uniform") {
      echo["share_table"] = "uniform";
      return;
    }
    if (s != "market-share") throw ConfigError("share_table must be \"uniform\", \"market-share\" or a list");
    cfg.share_table = ShareTable::market_share();
    cfg.share_table_name = s;
    echo["share_table"] = s;
  } else if (t.is_array()) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      Fields f(t[i], "share_table[" + std::to_string(i) + "]");
      std::string name = f.get<std::string>("name", "");
      double share = f.get<double>("share", -1.0);
      f.finish();
      if (share < 0.0) throw ConfigError(f.where("share") + " must be a number >= 0");
      entries.emplace_back(name, share);
    }
    try {
      cfg.share_table = ShareTable(entries);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("share_table: ") + e.what());
    }
    cfg.share_table_name = "custom";
    ordered_json e = ordered_json::array();
    for (const auto& [n, s] : entries) e.push_back({{"name", n}, {"share", s}});
    echo["share_table"] = e;
  } else {
    throw ConfigError("share_table must be \"uniform\", \"market-share\" or a list");
  }
  for (const auto& [n, s] : cfg.share_table->entries())
    if (!known.count(n)) throw ConfigError("share_table entry \"" + n + "\" does not name a profile");
}

void parse_fl(Fields& top, ExperimentConfig& cfg, ordered_json& echo) {
  FlConfig& fl = cfg.fl;
  if (top.has("fl")) {
    Fields f(top.raw("fl"), "fl");
    fl.clients = f.get<std::size_t>("clients", fl.clients);
    fl.per_round = f.get<std::size_t>("per_round", fl.per_round);
    fl.batch = f.get<std::size_t>("batch", fl.batch);
    fl.epochs = f.get<std::size_t>("epochs", fl.epochs);
    fl.rounds = f.get<std::size_t>("rounds", fl.rounds);
    fl.lr = f.get<double>("lr", fl.lr);
    f.finish();
  }
  try {
    fl.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  echo["fl"] = {{"clients", fl.clients}, {"per_round", fl.per_round}, {"batch", fl.batch},
                {"epochs", fl.epochs},   {"rounds", fl.rounds},       {"lr", fl.lr}};
}

void parse_strategy(Fields& top, ExperimentConfig& cfg, ordered_json& echo) {
  StrategyConfig& s = cfg.strategy;
  if (!top.has("strategy")) throw ConfigError("strategy is required");
  Fields f(top.raw("strategy"), "strategy");
  std::string name = f.get<std::string>("name", "");
  try {
    s.kind = strategy_from_name(name);
  } catch (const std::invalid_argument&) {
    throw ConfigError("strategy.name \"" + name + "\" is not a known strategy");
  }
  ordered_json e;
  e["name"] = name;
  switch (s.kind) {
    case StrategyKind::kFedAvg:
    case StrategyKind::kScaffold:
      break;
    case StrategyKind::kFedProx:
      s.mu = f.get<double>("mu", s.mu);
      e["mu"] = s.mu;
      break;
    case StrategyKind::kQFedAvg:
      s.q = f.get<double>("q", s.q);
      s.lipschitz = f.get<double>("lipschitz", 1.0 / cfg.fl.lr);
      e["q"] = s.q;
      e["lipschitz"] = s.lipschitz;
      break;
    case StrategyKind::kHeteroSwitch:
      s.alpha = f.get<double>("alpha", s.alpha);
      e["alpha"] = s.alpha;
      [[fallthrough]];
    case StrategyKind::kIspTransform:
    case StrategyKind::kIspSwad:
    case StrategyKind::kIspSwa:
      s.degrees.wb_degree = f.get<double>("wb_degree", s.degrees.wb_degree);
      s.degrees.gamma_degree = f.get<double>("gamma_degree", s.degrees.gamma_degree);
      e["wb_degree"] = s.degrees.wb_degree;
      e["gamma_degree"] = s.degrees.gamma_degree;
      break;
  }
  for (const auto& [k, v] : f.object().items()) {
    (void)v;
    if (k != "name" && !e.contains(k)) throw ConfigError("strategy." + k + " does not apply to strategy \"" + name + "\"");
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  echo["strategy"] = e;
}


json merge_over(json base, const json& user) {
  for (const auto& [k, v] : user.items()) {
    if (k == "preset") continue;
    bool merge = base.contains(k) && base[k].is_object() && v.is_object();
    if (k == "dataset" || k == "profiles") merge = false;
    if (k == "strategy" && merge && v.contains("name") && base[k].value("name", "") != v["name"]) merge = false;
    if (merge) {
      for (const auto& [ik, iv] : v.items()) base[k][ik] = iv;
    } else {
      base[k] = v;
    }
  }
  return base;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"fl-defaults", "synthetic-10-profiles", "degradation-matrix-3", "dg-sweep-desk", "swad-desk"};
}

nlohmann::json preset(const std::string& name) {
  if (name == "fl-defaults") {
    return {
        {"seed", 1},
        {"mode", "standard"},
        {"dataset", {{"synthetic", {{"train", 12000}, {"test", 2400}, {"classes", 12}, {"height", 32}, {"width", 32}}}}},
        {"profiles", {{"count", 9}, {"names", kMarketNames}}},
        {"share_table", "market-share"},
        {"fl", {{"clients", 100}, {"per_round", 20}, {"batch", 10}, {"epochs", 1}, {"rounds", 1000}, {"lr", 0.1}}},
        {"strategy", {{"name", "heteroswitch"}, {"alpha", 0.9}, {"wb_degree", 0.001}, {"gamma_degree", 0.9}}},
    };
  }
  if (name == "synthetic-10-profiles") return desk_base();
  if (name == "degradation-matrix-3") {
    json j = desk_base();
    j["mode"] = "degradation-matrix";
    j["profiles"] = {{"list", distinct_profiles()}};
    j["fl"] = {{"clients", 10}, {"per_round", 5}, {"batch", 10}, {"epochs", 1}, {"rounds", 60}, {"lr", 0.1}};
    j["strategy"] = {{"name", "fedavg"}};
    return j;
  }
  if (name == "dg-sweep-desk") {
    json j = desk_base();
    j["mode"] = "dg-sweep";
    j["profiles"] = {{"count", 5}};
    j["fl"]["rounds"] = 100;
    return j;
  }
  if (name == "swad-desk") {
    json j = desk_base();
    j["strategy"] = {{"name", "isp-swad"}, {"wb_degree", 0.001}, {"gamma_degree", 0.9}};
    return j;
  }
  throw ConfigError("preset \"" + name + "\" is not defined");
}

ExperimentConfig resolve_config(const nlohmann::json& user, const ConfigOverrides& over) {
  if (!user.is_object()) throw ConfigError("config must be an object");
  std::optional<std::string> preset_name = over.preset;
  if (!preset_name && user.contains("preset")) {
    if (!user["preset"].is_string()) throw ConfigError("preset must be a string");
    preset_name = user["preset"].get<std::string>();
  }
  json merged = merge_over(preset_name ? preset(*preset_name) : json::object(), user);
  if (over.seed) merged["seed"] = *over.seed;
  if (over.output_dir) merged["output_dir"] = over.output_dir->string();

  ExperimentConfig cfg;
  ordered_json echo;
  Fields top(merged, "");
  std::uint64_t seed = top.get<std::uint64_t>("seed", 0);
  echo["seed"] = seed;
  if (preset_name) echo["preset"] = *preset_name;

  std::string mode = top.get<std::string>("mode", "standard");
  if (mode == "standard") {
    cfg.mode = RunMode::kStandard;
  } else if (mode == "dg-sweep") {
    cfg.mode = RunMode::kDgSweep;
  } else if (mode == "degradation-matrix") {
    cfg.mode = RunMode::kDegradationMatrix;
  } else {
    throw ConfigError("mode must be \"standard\", \"dg-sweep\" or \"degradation-matrix\"");
  }
  echo["mode"] = mode_name(cfg.mode);

  parse_dataset(top, cfg, echo);
  parse_profiles(top, cfg, echo);
  parse_share_table(top, cfg, echo);
  cfg.fl.seed = seed;
  parse_fl(top, cfg, echo);
  parse_strategy(top, cfg, echo);

  if (top.has("model")) {
    try {
      cfg.model = ModelSpec::from_text(top.raw("model").dump());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
    echo["model"] = ordered_json::parse(cfg.model->to_text());
  }

  long long every = top.get<long long>("eval_every", 0);
  if (every < 0) throw ConfigError("eval_every must be >= 0");
  cfg.eval_every = static_cast<std::size_t>(every);
  echo["eval_every"] = cfg.eval_every;

  std::string deg = top.get<std::string>("degradation", "relative");
  if (deg == "relative") {
    cfg.degradation = DegradationMode::kRelative;
  } else if (deg == "absolute") {
    cfg.degradation = DegradationMode::kAbsolute;
  } else {
    throw ConfigError("degradation must be \"relative\" or \"absolute\"");
  }
  echo["degradation"] = deg;

  cfg.output_dir = top.get<std::string>("output_dir", "out");
  if (top.has("preset")) top.raw("preset");
  top.finish();

  if (cfg.dataset.kind == DatasetSource::Kind::kSynthetic &&
      static_cast<std::size_t>(cfg.dataset.synthetic.train) < cfg.fl.clients * cfg.fl.batch)
    throw ConfigError("dataset.synthetic.train must give every client (fl.clients) at least fl.batch samples");
  cfg.resolved = std::move(echo);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& over) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return resolve_config(j, over);
}

ExperimentInputs build_inputs(const ExperimentConfig& cfg) {
  std::shared_ptr<const BaseDataset> base;
  const std::uint64_t seed = cfg.fl.seed;
  const DatasetSource& ds = cfg.dataset;
  switch (ds.kind) {
    case DatasetSource::Kind::kSynthetic: {
      const SyntheticSource& s = ds.synthetic;
      base = std::make_shared<BaseDataset>(
          gen_base_synthetic(s.train, s.test, s.classes, s.height, s.width, stream_seed(seed, "data")));
      break;
    }
    case DatasetSource::Kind::kCifar:
      base = std::make_shared<BaseDataset>(load_cifar(ds.train_path, ds.test_path, ds.variant));
      break;
    case DatasetSource::Kind::kContainer: {
      std::ifstream f(ds.container, std::ios::binary);
      if (!f) throw std::runtime_error("cannot open dataset container " + ds.container.string());
      base = std::make_shared<BaseDataset>(read_dataset(f));
      break;
    }
  }
  const ProfileSource& ps = cfg.profiles;
  std::vector<DeviceProfile> profiles;
  if (!ps.explicit_list.empty()) {
    profiles = ps.explicit_list;
  } else {
    profiles = make_profiles(ps.count, ps.ranges, stream_seed(seed, "profiles"));
    for (std::size_t i = 0; i < ps.names.size(); ++i) profiles[i].name = ps.names[i];
  }
  ModelSpec model = cfg.model ? *cfg.model : ModelSpec::small_cnn({base->height, base->width, 3}, base->classes);
  if (model.input() != Shape3{base->height, base->width, 3} || model.classes() != base->classes)
    throw ConfigError("model input/classes do not match the dataset");
  return ExperimentInputs{base, std::move(profiles), cfg.share_table, std::move(model), nullptr};
}

namespace {

ExperimentConfig load_for_cli(const CliOptions& o) {
  ConfigOverrides over{o.preset, o.seed, o.out};
  if (o.config) return load_config(*o.config, over);
  if (o.preset) return resolve_config(nlohmann::json::object(), over);
  throw ConfigError("either --config or --preset is required");
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

RunOptions run_options(const ExperimentConfig& cfg, const CliOptions& o, std::ostream& log) {
  RunOptions opts;
  opts.threads = o.threads;
  opts.eval_every = cfg.eval_every;
  opts.config_echo = cfg.resolved;
  opts.on_round = [&log](const RoundLog& r) {
    log << "round " << r.round << " loss " << format_double(r.mean_loss);
    if (r.accuracy) {
      double sum = 0.0;
      for (double a : *r.accuracy) sum += a;
      log << " mean_acc " << format_double(sum / static_cast<double>(r.accuracy->size()));
    }
    log << '\n';
  };
  return opts;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int do_standard(const ExperimentConfig& cfg, const CliOptions& o, std::ostream& log) {
  ExperimentInputs in = build_inputs(cfg);
  ExperimentSetup setup = make_setup(in, cfg.fl);
  ExperimentReport rep = run_experiment(cfg.fl, cfg.strategy, setup, run_options(cfg, o, log));
  emit(rep, cfg.output_dir);
  log << "wrote " << (cfg.output_dir / "report.json").string() << '\n';
  return 0;
}

int do_dg(const ExperimentConfig& cfg, const CliOptions& o, std::ostream& log) {
  ExperimentInputs in = build_inputs(cfg);
  if (in.profiles.size() < 2) throw ConfigError("profiles: dg-sweep needs at least two profiles");
  DgSummary sum = dg_sweep(cfg.fl, cfg.strategy, in, run_options(cfg, o, log));
  std::filesystem::create_directories(cfg.output_dir);
  ordered_json j;
  j["schema"] = "hetsim.dg/1";
  j["config"] = cfg.resolved;
  j["runs"] = ordered_json::array();
  for (const DgRun& r : sum.runs) {
    const std::string& name = in.profiles[static_cast<std::size_t>(r.excluded)].name;
    emit(r.report, cfg.output_dir / ("exclude-" + name));
    j["runs"].push_back({{"excluded", name}, {"ood_accuracy", r.ood_accuracy}});
  }
  j["worst_case_ood"] = sum.worst_case_ood;
  j["worst_profiles"] = sum.worst_profiles;
  write_text(cfg.output_dir / "dg_summary.json", j.dump(2) + "\n");
  log << "worst-case OOD accuracy " << format_double(sum.worst_case_ood) << '\n';
  return 0;
}

int do_matrix(const ExperimentConfig& cfg, const CliOptions& o, std::ostream& log) {
  ExperimentInputs in = build_inputs(cfg);
  MatrixRun m = degradation_matrix(cfg.fl, cfg.strategy, in, cfg.degradation, run_options(cfg, o, log));
  std::filesystem::create_directories(cfg.output_dir);
  for (std::size_t i = 0; i < m.rows.size(); ++i) emit(m.rows[i], cfg.output_dir / ("train-" + in.profiles[i].name));
  ordered_json j = matrix_to_json(m.matrix);
  j["config"] = cfg.resolved;
  write_text(cfg.output_dir / "matrix.json", j.dump(2) + "\n");
  write_text(cfg.output_dir / "matrix.csv", matrix_csv(m.matrix));
  log << "diagonal-dominant cells " << m.matrix.diagonal_dominant_cells() << " of "
      << m.matrix.profiles.size() * m.matrix.profiles.size() << '\n';
  return 0;
}

}  // namespace

int cmd_run(const CliOptions& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_for_cli(o);
    switch (cfg.mode) {
      case RunMode::kStandard: return do_standard(cfg, o, log);
      case RunMode::kDgSweep: return do_dg(cfg, o, log);
      case RunMode::kDegradationMatrix: return do_matrix(cfg, o, log);
    }
    return 1;
  });
}

int cmd_matrix(const CliOptions& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] { return do_matrix(load_for_cli(o), o, log); });
}

int cmd_dg(const CliOptions& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] { return do_dg(load_for_cli(o), o, log); });
}

int cmd_dump_samples(const CliOptions& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_for_cli(o);
    ExperimentInputs in = build_inputs(cfg);
    if (o.samples > in.base->train_images.size())
      throw ConfigError("--samples exceeds the train split size");
    if (o.samples == 0) return 0;
    RenderCache& cache = *ensure_cache(in);
    std::size_t written = 0;
    for (std::size_t p = 0; p < in.profiles.size(); ++p) {
      auto dir = cfg.output_dir / "samples" / in.profiles[p].name;
      std::filesystem::create_directories(dir);
      for (std::size_t i = 0; i < o.samples; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.ppm", i);
        std::ofstream f(dir / name, std::ios::binary);
        write_ppm(f, *cache.get(Split::kTrain, i, static_cast<int>(p)));
        if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
        ++written;
      }
    }
    log << "wrote " << written << " samples\n";
    return 0;
  });
}

int cmd_validate(const CliOptions& o, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_for_cli(o);
    log << cfg.resolved.dump(2) << '\n';
    return 0;
  });
}

}  // namespace hetsim
