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
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "hetsim/isp.hpp"
#include "hetsim/nn.hpp"

namespace hetsim {

enum class Split { kTrain, kTest };

struct BaseDataset {
  int classes = 0;
  int height = 0;
  int width = 0;
  std::vector<Image> train_images;
  std::vector<std::uint32_t> train_labels;
  std::vector<Image> test_images;
  std::vector<std::uint32_t> test_labels;

  const std::vector<Image>& images(Split s) const { return s == Split::kTrain ? train_images : test_images; }
  const std::vector<std::uint32_t>& labels(Split s) const { return s == Split::kTrain ? train_labels : test_labels; }
  void validate() const;
};

// Number of procedural texture/shape families gen_base_synthetic can draw from.
inline constexpr int kSyntheticFamilies = 12;

// Balanced, class-distinguishable procedural images: each class is a pattern
// family (stripes, checkerboard, rings, disk, ...) with a characteristic hue,
// rendered with per-sample jitter in geometry, colour and additive noise.
BaseDataset gen_base_synthetic(int n_train, int n_test, int classes, int height, int width, std::uint64_t seed);

enum class CifarVariant { kCifar10, kCifar100 };

struct LabeledImages {
  int classes = 0;
  std::vector<Image> images;
  std::vector<std::uint32_t> labels;
};

// Standard CIFAR binary records: [label] or [coarse][fine], then 1024 R,
// 1024 G, 1024 B bytes of a 32x32 image. Fine labels are used for CIFAR-100.
LabeledImages load_cifar_binary(const std::filesystem::path& path, CifarVariant variant);
BaseDataset load_cifar(const std::filesystem::path& train, const std::filesystem::path& test, CifarVariant variant);

// Length-prefixed little-endian container:
//   "HSDS" u32 version=1, u32 classes, u32 height, u32 width, u64 n_train, u64 n_test,
//   then per sample (train first): u32 label, height*width*3 f64 HWC.
void write_dataset(std::ostream& out, const BaseDataset& ds);
BaseDataset read_dataset(std::istream& in);

struct ClientShard {
  std::uint32_t id = 0;
  std::vector<std::size_t> indices;  // into the train split
  int profile = -1;                  // index into the profile list; -1 = unassigned
};

// IID random partition of the train split: disjoint, covering, sizes differ by at most one.
std::vector<ClientShard> partition(std::size_t n_train, std::size_t n_clients, std::uint64_t seed);

class ShareTable {
 public:
  ShareTable() = default;
  explicit ShareTable(std::vector<std::pair<std::string, double>> shares);

  static ShareTable uniform(const std::vector<DeviceProfile>& profiles);
  // Smartphone market shares of nine devices across three vendors and tiers.
  static ShareTable market_share();

  const std::vector<std::pair<std::string, double>>& entries() const { return shares_; }

  // Largest-remainder apportionment of n over the entries; remainder ties go
  // to the lexicographically smaller name. Result is in entry order.
  std::vector<std::size_t> counts(std::size_t n) const;

 private:
  std::vector<std::pair<std::string, double>> shares_;
};

// Assigns profile ids so that per-profile client counts follow table.counts(N);
// which client gets which profile is a seeded shuffle.
std::vector<ClientShard> assign_profiles(std::vector<ClientShard> shards, const std::vector<DeviceProfile>& profiles,
                                         const ShareTable& table, std::uint64_t seed);

// Rendered samples share ownership with the render cache.
struct SampleSet {
  std::vector<std::shared_ptr<const Image>> images;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
  Batch batch() const;
  Batch batch(std::span<const std::size_t> order) const;
};

std::uint64_t dataset_hash(const SampleSet& set);

// Renders each (split, sample, profile) at most once. Safe for concurrent use;
// a racing duplicate render produces an identical value and is discarded.
class RenderCache {
 public:
  RenderCache(std::shared_ptr<const BaseDataset> base, std::vector<DeviceProfile> profiles);

  std::shared_ptr<const Image> get(Split split, std::size_t sample, int profile);
  const BaseDataset& base() const { return *base_; }
  const std::vector<DeviceProfile>& profiles() const { return profiles_; }
  std::size_t renders() const;

 private:
  std::shared_ptr<const BaseDataset> base_;
  std::vector<DeviceProfile> profiles_;
  mutable std::mutex mu_;
  std::map<std::tuple<int, int, std::size_t>, std::shared_ptr<const Image>> cache_;
  std::size_t renders_ = 0;
};

SampleSet render_shard(const ClientShard& shard, RenderCache& cache);

// The full test split rendered once per profile, in profile order.
std::vector<SampleSet> build_eval_sets(RenderCache& cache);

}  // namespace hetsim
