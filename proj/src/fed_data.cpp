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

#include "hetsim/fed_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <tuple>

#include "hetsim/rng.hpp"

namespace hetsim {

void BaseDataset::validate() const {
  if (classes < 1) throw std::invalid_argument("dataset: class count must be positive");
  for (Split s : {Split::kTrain, Split::kTest}) {
    const auto& imgs = images(s);
    const auto& labs = labels(s);
    if (imgs.size() != labs.size()) throw std::invalid_argument("dataset: images and labels differ in length");
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      if (labs[i] >= static_cast<std::uint32_t>(classes))
        throw std::invalid_argument("dataset: label out of range at sample " + std::to_string(i));
      if (imgs[i].height != height || imgs[i].width != width)
        throw std::invalid_argument("dataset: image size mismatch at sample " + std::to_string(i));
    }
  }
}

namespace {

struct PatternJitter {
  double freq;
  double phase;
  double cx;
  double cy;
  double size;
  double flip;
};

double smoothstep_mask(double v) { return 0.5 + 0.5 * std::tanh(4.0 * v); }

// Soft foreground mask in [0, 1] for family f at normalised coordinates u, v in [0, 1).
double pattern_mask(int f, double u, double v, const PatternJitter& j) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double du = u - j.cx;
  const double dv = v - j.cy;
  const double r = std::sqrt(du * du + dv * dv);
  switch (f) {
    case 0: return smoothstep_mask(std::sin(two_pi * j.freq * v + j.phase));
    case 1: return smoothstep_mask(std::sin(two_pi * j.freq * u + j.phase));
    case 2: return smoothstep_mask(std::sin(two_pi * j.freq * (u + v) * 0.7071 + j.phase));
    case 3: return smoothstep_mask(std::sin(two_pi * j.freq * 0.5 * u + j.phase) *
                                   std::sin(two_pi * j.freq * 0.5 * v + j.phase) * 3.0);
    case 4: return smoothstep_mask(std::sin(two_pi * j.freq * r + j.phase));
    case 5: return smoothstep_mask((j.size - r) * 12.0);
    case 6: return smoothstep_mask((0.12 - std::min(std::fabs(du), std::fabs(dv))) * 20.0);
    case 7: return smoothstep_mask(std::sin(two_pi * j.freq * (u - v) * 0.7071 + j.phase));
    case 8: return j.flip > 0.5 ? u : 1.0 - u;
    case 9: return smoothstep_mask((0.08 - std::fabs(std::max(std::fabs(du), std::fabs(dv)) - j.size)) * 20.0);
    case 10: {
      const double a = std::sin(two_pi * j.freq * u + j.phase);
      const double b = std::sin(two_pi * j.freq * v + j.phase);
      return smoothstep_mask((a * b - 0.5) * 3.0);
    }
    default: return std::exp(-(du * du + dv * dv) / (2.0 * j.size * j.size * 0.25));
  }
}

Image synth_image(int family, int h, int w, RngStream& rng) {
  constexpr double kNoise = 0.08;
  PatternJitter j{};
  j.freq = rng.uniform(1.5, 3.0);
  j.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  j.cx = rng.uniform(0.3, 0.7);
  j.cy = rng.uniform(0.3, 0.7);
  j.size = rng.uniform(0.2, 0.35);
  j.flip = rng.uniform();

  const double base_hue = std::fmod(family * 137.508, 360.0);
  double hue = std::fmod(base_hue + rng.uniform(-40.0, 40.0) + 360.0, 360.0);
  const auto fg = hsv_to_rgb(hue, rng.uniform(0.4, 0.9), rng.uniform(0.55, 1.0));
  const double grey = rng.uniform(0.15, 0.6);
  double bg[3];
  for (double& c : bg) c = grey + rng.uniform(-0.05, 0.05);

  Image img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = pattern_mask(family, (x + 0.5) / w, (y + 0.5) / h, j);
      for (int c = 0; c < 3; ++c) {
        const double v = bg[c] * (1.0 - m) + fg[c] * m + rng.uniform(-kNoise, kNoise);
        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error(std::string("dataset container: truncated while reading ") + what);
  return v;
}

}  // namespace

BaseDataset gen_base_synthetic(int n_train, int n_test, int classes, int height, int width, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("gen_base_synthetic: need at least 2 classes");
  if (classes > kSyntheticFamilies)
    throw std::invalid_argument("gen_base_synthetic: " + std::to_string(classes) + " classes requested but only " +
                                std::to_string(kSyntheticFamilies) + " pattern families exist");
  if (n_train < 2 * classes || n_test < 2 * classes)
    throw std::invalid_argument("gen_base_synthetic: need at least 2 samples per class in each split");
  if (height < 4 || width < 4) throw std::invalid_argument("gen_base_synthetic: images must be at least 4x4");

  BaseDataset ds;
  ds.classes = classes;
  ds.height = height;
  ds.width = width;
  RngStream rng(seed);
  for (int i = 0; i < n_train; ++i) {
    const int c = i % classes;
    ds.train_images.push_back(synth_image(c, height, width, rng));
    ds.train_labels.push_back(static_cast<std::uint32_t>(c));
  }
  for (int i = 0; i < n_test; ++i) {
    const int c = i % classes;
    ds.test_images.push_back(synth_image(c, height, width, rng));
    ds.test_labels.push_back(static_cast<std::uint32_t>(c));
  }
  return ds;
}

LabeledImages load_cifar_binary(const std::filesystem::path& path, CifarVariant variant) {
  constexpr std::size_t kPixels = 32 * 32;
  const std::size_t label_bytes = variant == CifarVariant::kCifar100 ? 2 : 1;
  const std::size_t record = label_bytes + 3 * kPixels;

  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cifar: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t full = bytes.size() / record;
  if (bytes.size() % record != 0)
    throw std::runtime_error("cifar: " + path.string() + ": incomplete record at byte offset " +
                             std::to_string(full * record) + " (record size " + std::to_string(record) +
                             ", file size " + std::to_string(bytes.size()) + ")");

  LabeledImages out;
  out.classes = variant == CifarVariant::kCifar100 ? 100 : 10;
  out.images.reserve(full);
  out.labels.reserve(full);
  for (std::size_t r = 0; r < full; ++r) {
    const unsigned char* rec = bytes.data() + r * record;
    const std::uint32_t label = rec[label_bytes - 1];
    if (label >= static_cast<std::uint32_t>(out.classes))
      throw std::runtime_error("cifar: " + path.string() + ": label " + std::to_string(label) +
                               " out of range at byte offset " + std::to_string(r * record + label_bytes - 1));
    const unsigned char* px = rec + label_bytes;
    Image img(32, 32);
    for (std::size_t p = 0; p < kPixels; ++p)
      for (std::size_t c = 0; c < 3; ++c) img.pixels[p * 3 + c] = px[c * kPixels + p] / 255.0;
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
  }
  return out;
}

BaseDataset load_cifar(const std::filesystem::path& train, const std::filesystem::path& test, CifarVariant variant) {
  LabeledImages tr = load_cifar_binary(train, variant);
  LabeledImages te = load_cifar_binary(test, variant);
  BaseDataset ds;
  ds.classes = tr.classes;
  ds.height = 32;
  ds.width = 32;
  ds.train_images = std::move(tr.images);
  ds.train_labels = std::move(tr.labels);
  ds.test_images = std::move(te.images);
  ds.test_labels = std::move(te.labels);
  return ds;
}

void write_dataset(std::ostream& out, const BaseDataset& ds) {
  out.write("HSDS", 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.classes));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.height));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.width));
  put<std::uint64_t>(out, ds.train_images.size());
  put<std::uint64_t>(out, ds.test_images.size());
  for (Split s : {Split::kTrain, Split::kTest}) {
    const auto& imgs = ds.images(s);
    const auto& labs = ds.labels(s);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      put<std::uint32_t>(out, labs[i]);
      out.write(reinterpret_cast<const char*>(imgs[i].pixels.data()),
                static_cast<std::streamsize>(imgs[i].pixels.size() * sizeof(double)));
    }
  }
  if (!out) throw std::runtime_error("dataset container: write failure");
}

BaseDataset read_dataset(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "HSDS", 4) != 0)
    throw std::runtime_error("dataset container: bad magic");
  if (get<std::uint32_t>(in, "version") != 1) throw std::runtime_error("dataset container: unsupported version");
  BaseDataset ds;
  ds.classes = static_cast<int>(get<std::uint32_t>(in, "classes"));
  ds.height = static_cast<int>(get<std::uint32_t>(in, "height"));
  ds.width = static_cast<int>(get<std::uint32_t>(in, "width"));
  const auto n_train = get<std::uint64_t>(in, "train count");
  const auto n_test = get<std::uint64_t>(in, "test count");
  for (Split s : {Split::kTrain, Split::kTest}) {
    auto& imgs = s == Split::kTrain ? ds.train_images : ds.test_images;
    auto& labs = s == Split::kTrain ? ds.train_labels : ds.test_labels;
    const std::uint64_t n = s == Split::kTrain ? n_train : n_test;
    for (std::uint64_t i = 0; i < n; ++i) {
      labs.push_back(get<std::uint32_t>(in, "label"));
      Image img(ds.height, ds.width);
      if (!in.read(reinterpret_cast<char*>(img.pixels.data()),
                   static_cast<std::streamsize>(img.pixels.size() * sizeof(double))))
        throw std::runtime_error("dataset container: truncated pixel data");
      imgs.push_back(std::move(img));
    }
  }
  ds.validate();
  return ds;
}

std::vector<ClientShard> partition(std::size_t n_train, std::size_t n_clients, std::uint64_t seed) {
  if (n_clients < 1) throw std::invalid_argument("partition: need at least one client");
  if (n_train < n_clients)
    throw std::invalid_argument("partition: " + std::to_string(n_train) + " samples cannot cover " +
                                std::to_string(n_clients) + " clients");
  std::vector<std::size_t> idx(n_train);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  RngStream rng(seed);
  for (std::size_t i = n_train; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);

  std::vector<ClientShard> shards(n_clients);
  const std::size_t base = n_train / n_clients;
  const std::size_t extra = n_train % n_clients;
  std::size_t pos = 0;
  for (std::size_t c = 0; c < n_clients; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    shards[c].id = static_cast<std::uint32_t>(c);
    shards[c].indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                             idx.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(shards[c].indices.begin(), shards[c].indices.end());
    pos += len;
  }
  return shards;
}

ShareTable::ShareTable(std::vector<std::pair<std::string, double>> shares) : shares_(std::move(shares)) {
  if (shares_.empty()) throw std::invalid_argument("share table: empty");
  double total = 0.0;
  for (const auto& [name, s] : shares_) {
    if (!(s >= 0.0)) throw std::invalid_argument("share table: negative share for '" + name + "'");
    total += s;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw std::invalid_argument("share table: shares sum to " + std::to_string(total) + ", expected 1");
}

ShareTable ShareTable::uniform(const std::vector<DeviceProfile>& profiles) {
  if (profiles.empty()) throw std::invalid_argument("share table: no profiles");
  std::vector<std::pair<std::string, double>> v;
  for (const auto& p : profiles) v.emplace_back(p.name, 1.0 / static_cast<double>(profiles.size()));
  return ShareTable(std::move(v));
}

ShareTable ShareTable::market_share() {
  return ShareTable({{"S22", 0.12}, {"VELVET", 0.02}, {"Pixel5", 0.01},
                     {"S9", 0.27},  {"G7", 0.05},     {"Pixel2", 0.03},
                     {"S6", 0.38},  {"G4", 0.08},     {"Nexus5X", 0.04}});
}

std::vector<std::size_t> ShareTable::counts(std::size_t n) const {
  std::vector<std::size_t> out(shares_.size());
  std::vector<double> rem(shares_.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < shares_.size(); ++i) {
    const double quota = shares_[i].second * static_cast<double>(n);
    out[i] = static_cast<std::size_t>(std::floor(quota));
    rem[i] = quota - std::floor(quota);
    assigned += out[i];
  }
  std::vector<std::size_t> order(shares_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    return shares_[a].first < shares_[b].first;
  });
  if (assigned > n) throw std::logic_error("share table: floors exceed the total");
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++out[order[k % order.size()]];
  return out;
}

std::vector<ClientShard> assign_profiles(std::vector<ClientShard> shards, const std::vector<DeviceProfile>& profiles,
                                         const ShareTable& table, std::uint64_t seed) {
  std::vector<int> ids;
  for (const auto& [name, share] : table.entries()) {
    auto it = std::find_if(profiles.begin(), profiles.end(), [&](const DeviceProfile& p) { return p.name == name; });
    if (it == profiles.end()) throw std::invalid_argument("share table names unknown profile '" + name + "'");
    ids.push_back(static_cast<int>(it - profiles.begin()));
  }
  const auto counts = table.counts(shards.size());
  std::vector<int> slots;
  slots.reserve(shards.size());
  for (std::size_t i = 0; i < counts.size(); ++i) slots.insert(slots.end(), counts[i], ids[i]);
  RngStream rng(seed);
  for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[rng.below(i)]);
  for (std::size_t c = 0; c < shards.size(); ++c) shards[c].profile = slots[c];
  return shards;
}

Batch SampleSet::batch() const {
  Batch b;
  b.inputs.reserve(size());
  for (const auto& img : images) b.inputs.emplace_back(img->pixels);
  b.labels = labels;
  return b;
}

Batch SampleSet::batch(std::span<const std::size_t> order) const {
  Batch b;
  b.inputs.reserve(order.size());
  b.labels.reserve(order.size());
  for (std::size_t i : order) {
    b.inputs.emplace_back(images[i]->pixels);
    b.labels.push_back(labels[i]);
  }
  return b;
}

std::uint64_t dataset_hash(const SampleSet& set) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < set.size(); ++i) {
    h = image_hash(*set.images[i], h);
    h = splitmix64(h ^ set.labels[i]);
  }
  return h;
}

RenderCache::RenderCache(std::shared_ptr<const BaseDataset> base, std::vector<DeviceProfile> profiles)
    : base_(std::move(base)), profiles_(std::move(profiles)) {
  for (const auto& p : profiles_) p.validate();
}

std::shared_ptr<const Image> RenderCache::get(Split split, std::size_t sample, int profile) {
  if (profile < 0 || static_cast<std::size_t>(profile) >= profiles_.size())
    throw std::out_of_range("render cache: profile id " + std::to_string(profile) + " out of range");
  const auto& imgs = base_->images(split);
  if (sample >= imgs.size()) throw std::out_of_range("render cache: sample index out of range");
  const auto key = std::make_tuple(static_cast<int>(split), profile, sample);
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  auto img = std::make_shared<const Image>(apply_profile(imgs[sample], profiles_[static_cast<std::size_t>(profile)]));
  std::lock_guard lock(mu_);
  auto [it, inserted] = cache_.emplace(key, std::move(img));
  if (inserted) ++renders_;
  return it->second;
}

std::size_t RenderCache::renders() const {
  std::lock_guard lock(mu_);
  return renders_;
}

SampleSet render_shard(const ClientShard& shard, RenderCache& cache) {
  if (shard.profile < 0) throw std::invalid_argument("render_shard: client " + std::to_string(shard.id) + " has no profile");
  SampleSet s;
  s.images.reserve(shard.indices.size());
  for (std::size_t i : shard.indices) {
    s.images.push_back(cache.get(Split::kTrain, i, shard.profile));
    s.labels.push_back(cache.base().train_labels.at(i));
  }
  return s;
}

std::vector<SampleSet> build_eval_sets(RenderCache& cache) {
  std::vector<SampleSet> out(cache.profiles().size());
  const std::size_t n = cache.base().test_images.size();
  for (std::size_t p = 0; p < out.size(); ++p) {
    for (std::size_t i = 0; i < n; ++i) {
      out[p].images.push_back(cache.get(Split::kTest, i, static_cast<int>(p)));
      out[p].labels.push_back(cache.base().test_labels[i]);
    }
  }
  return out;
}

}  // namespace hetsim
