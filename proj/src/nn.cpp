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

#include "hetsim/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "hetsim/rng.hpp"
#include "json.hpp"

namespace hetsim {

static_assert(std::endian::native == std::endian::little,
              "binary blobs are written in host order and assume a little-endian host");

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kDense: return "dense";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kSoftmaxXent: return "softmax_xent";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (LayerKind k : {LayerKind::kConv2d, LayerKind::kDense, LayerKind::kRelu,
                      LayerKind::kMaxPool, LayerKind::kFlatten, LayerKind::kSoftmaxXent}) {
    if (name == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + name + "'");
}

ModelSpec::ModelSpec(Shape3 input, int classes, std::vector<LayerSpec> layers)
    : input_(input), classes_(classes), layers_(std::move(layers)) {
  if (classes_ < 2) throw std::invalid_argument("ModelSpec: class count must be >= 2");
  if (input_.h < 1 || input_.w < 1 || input_.c < 1)
    throw std::invalid_argument("ModelSpec: input dimensions must be positive");
  if (layers_.empty() || layers_.back().kind != LayerKind::kSoftmaxXent)
    throw std::invalid_argument("ModelSpec: last layer must be softmax_xent");

  shapes_.push_back(input_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Shape3 in = shapes_.back();
    Shape3 out = in;
    std::size_t nw = 0;
    std::size_t nb = 0;
    const std::string where = "ModelSpec: layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
    switch (l.kind) {
      case LayerKind::kConv2d:
        if (l.kernel < 1 || l.kernel % 2 == 0) throw std::invalid_argument(where + "kernel must be odd and positive");
        if (l.filters < 1) throw std::invalid_argument(where + "filters must be positive");
        out = {in.h, in.w, l.filters};
        nw = static_cast<std::size_t>(l.filters) * l.kernel * l.kernel * in.c;
        nb = static_cast<std::size_t>(l.filters);
        break;
      case LayerKind::kDense:
        if (l.units < 1) throw std::invalid_argument(where + "units must be positive");
        out = {1, 1, l.units};
        nw = static_cast<std::size_t>(l.units) * in.size();
        nb = static_cast<std::size_t>(l.units);
        break;
      case LayerKind::kRelu:
        break;
      case LayerKind::kMaxPool:
        if (l.pool < 1) throw std::invalid_argument(where + "pool must be positive");
        if (in.h < l.pool || in.w < l.pool) throw std::invalid_argument(where + "pool larger than input");
        out = {in.h / l.pool, in.w / l.pool, in.c};
        break;
      case LayerKind::kFlatten:
        out = {1, 1, static_cast<int>(in.size())};
        break;
      case LayerKind::kSoftmaxXent:
        if (i + 1 != layers_.size()) throw std::invalid_argument(where + "must be the last layer");
        if (in.size() != static_cast<std::size_t>(classes_))
          throw std::invalid_argument(where + "input size " + std::to_string(in.size()) +
                                      " does not match class count " + std::to_string(classes_));
        break;
    }
    offsets_.push_back(param_count_);
    weight_counts_.push_back(nw);
    bias_counts_.push_back(nb);
    param_count_ += nw + nb;
    shapes_.push_back(out);
  }
}

ModelSpec ModelSpec::small_cnn(Shape3 input, int classes) {
  return ModelSpec(input, classes,
                   {LayerSpec::conv2d(3, 8), LayerSpec::relu(), LayerSpec::maxpool(2),
                    LayerSpec::conv2d(3, 16), LayerSpec::relu(), LayerSpec::maxpool(2),
                    LayerSpec::flatten(), LayerSpec::dense(classes), LayerSpec::softmax_xent()});
}

std::size_t ModelSpec::fan_in(std::size_t i) const {
  const LayerSpec& l = layers_[i];
  if (l.kind == LayerKind::kConv2d) return static_cast<std::size_t>(l.kernel) * l.kernel * shapes_[i].c;
  if (l.kind == LayerKind::kDense) return shapes_[i].size();
  return 0;
}

std::string ModelSpec::to_text() const {
  nlohmann::ordered_json j;
  j["input"] = {input_.h, input_.w, input_.c};
  j["classes"] = classes_;
  j["layers"] = nlohmann::ordered_json::array();
  for (const LayerSpec& l : layers_) {
    nlohmann::ordered_json e;
    e["kind"] = to_string(l.kind);
    if (l.kind == LayerKind::kConv2d) {
      e["kernel"] = l.kernel;
      e["filters"] = l.filters;
    } else if (l.kind == LayerKind::kDense) {
      e["units"] = l.units;
    } else if (l.kind == LayerKind::kMaxPool) {
      e["pool"] = l.pool;
    }
    j["layers"].push_back(e);
  }
  return j.dump(2);
}

ModelSpec ModelSpec::from_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("ModelSpec: ") + e.what());
  }
  try {
    const auto& in = j.at("input");
    if (!in.is_array() || in.size() != 3) throw std::invalid_argument("ModelSpec: input must be [h, w, c]");
    Shape3 shape{in[0].get<int>(), in[1].get<int>(), in[2].get<int>()};
    std::vector<LayerSpec> layers;
    for (const auto& e : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(e.at("kind").get<std::string>());
      l.kernel = e.value("kernel", 0);
      l.filters = e.value("filters", 0);
      l.units = e.value("units", 0);
      l.pool = e.value("pool", 0);
      layers.push_back(l);
    }
    return ModelSpec(shape, j.at("classes").get<int>(), std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("ModelSpec: ") + e.what());
  }
}

std::span<const double> ModelState::weights(std::size_t layer) const {
  return std::span<const double>(params).subspan(spec->weight_offset(layer), spec->weight_count(layer));
}

std::span<const double> ModelState::bias(std::size_t layer) const {
  return std::span<const double>(params).subspan(spec->weight_offset(layer) + spec->weight_count(layer),
                                                 spec->bias_count(layer));
}

ModelState init_params(const ModelSpec& spec, std::uint64_t seed) {
  ModelState s{std::make_shared<const ModelSpec>(spec), std::vector<double>(spec.param_count(), 0.0)};
  RngStream rng(seed);
  for (std::size_t i = 0; i < spec.layers().size(); ++i) {
    const std::size_t n = spec.weight_count(i);
    if (n == 0) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in(i)));
    double* w = s.params.data() + spec.weight_offset(i);
    for (std::size_t k = 0; k < n; ++k) w[k] = rng.uniform(-bound, bound);
  }
  return s;
}

namespace {

// Weights are [filters][ky][kx][in_c]; activations are HWC. Convolution
// goes through a column matrix col[j][pixel], j = (ky * k + kx) * c + ic,
// holding zeros where the window leaves the image, so the inner loops run
// over pixels.
void im2col(const double* in, const Shape3& s, int k, double* col) {
  const int pad = k / 2;
  const std::size_t np = static_cast<std::size_t>(s.h) * s.w;
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      for (int ic = 0; ic < s.c; ++ic) {
        double* row = col + ((static_cast<std::size_t>(ky) * k + kx) * s.c + ic) * np;
        const int x0 = std::max(0, pad - kx);
        const int x1 = std::min(s.w, s.w + pad - kx);
        for (int y = 0; y < s.h; ++y) {
          const int iy = y + ky - pad;
          double* r = row + static_cast<std::size_t>(y) * s.w;
          if (iy < 0 || iy >= s.h) {
            std::fill(r, r + s.w, 0.0);
            continue;
          }
          std::fill(r, r + x0, 0.0);
          const double* src = in + (static_cast<std::size_t>(iy) * s.w + (x0 + kx - pad)) * s.c + ic;
          for (int x = x0; x < x1; ++x, src += s.c) r[x] = *src;
          std::fill(r + x1, r + s.w, 0.0);
        }
      }
    }
  }
}

struct ConvScratch {
  std::vector<double> col;
  std::vector<double> out_t;  // [filter][pixel]
  std::vector<double> dcol;
};

void conv_forward(const double* in, const Shape3& s, const double* w, const double* b, int k, int f,
                  double* out, ConvScratch& cs) {
  const std::size_t np = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t len = static_cast<std::size_t>(k) * k * s.c;
  cs.col.resize(len * np);
  cs.out_t.resize(static_cast<std::size_t>(f) * np);
  im2col(in, s, k, cs.col.data());
  for (int oc = 0; oc < f; ++oc) {
    double* o = cs.out_t.data() + static_cast<std::size_t>(oc) * np;
    std::fill(o, o + np, b[oc]);
    const double* wr = w + static_cast<std::size_t>(oc) * len;
    // Four column rows per pass keeps o[p] in a register across four products.
    std::size_t j = 0;
    for (; j + 4 <= len; j += 4) {
      const double w0 = wr[j], w1 = wr[j + 1], w2 = wr[j + 2], w3 = wr[j + 3];
      const double* c0 = cs.col.data() + j * np;
      const double* c1 = c0 + np;
      const double* c2 = c1 + np;
      const double* c3 = c2 + np;
      for (std::size_t p = 0; p < np; ++p) o[p] += ((w0 * c0[p] + w1 * c1[p]) + (w2 * c2[p] + w3 * c3[p]));
    }
    for (; j < len; ++j) {
      const double wj = wr[j];
      const double* cr = cs.col.data() + j * np;
      for (std::size_t p = 0; p < np; ++p) o[p] += wj * cr[p];
    }
  }
  for (std::size_t p = 0; p < np; ++p)
    for (int oc = 0; oc < f; ++oc) out[p * f + oc] = cs.out_t[static_cast<std::size_t>(oc) * np + p];
}

// Expects cs.col to hold the column matrix of `in` (left by conv_forward).
void conv_backward(const Shape3& s, const double* w, int k, int f, const double* dout, double* dw, double* db,
                   double* din, ConvScratch& cs) {
  const int pad = k / 2;
  const std::size_t np = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t len = static_cast<std::size_t>(k) * k * s.c;
  // dout is HWC; reuse out_t for its [filter][pixel] transpose.
  double* g = cs.out_t.data();
  for (std::size_t p = 0; p < np; ++p)
    for (int oc = 0; oc < f; ++oc) g[static_cast<std::size_t>(oc) * np + p] = dout[p * f + oc];

  for (int oc = 0; oc < f; ++oc) {
    const double* gr = g + static_cast<std::size_t>(oc) * np;
    double bsum = 0.0;
    for (std::size_t p = 0; p < np; ++p) bsum += gr[p];
    db[oc] += bsum;
    double* dwr = dw + static_cast<std::size_t>(oc) * len;
    for (std::size_t j = 0; j < len; ++j) {
      const double* cr = cs.col.data() + j * np;
      // Eight interleaved partial sums, combined pairwise at the end.
      double a[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
      std::size_t p = 0;
      for (; p + 8 <= np; p += 8)
        for (int u = 0; u < 8; ++u) a[u] += gr[p + u] * cr[p + u];
      for (; p < np; ++p) a[0] += gr[p] * cr[p];
      dwr[j] += ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
    }
  }
  if (!din) return;

  cs.dcol.assign(len * np, 0.0);
  int oc = 0;
  for (; oc + 4 <= f; oc += 4) {
    const double* g0 = g + static_cast<std::size_t>(oc) * np;
    const double* g1 = g0 + np;
    const double* g2 = g1 + np;
    const double* g3 = g2 + np;
    const double* w0 = w + static_cast<std::size_t>(oc) * len;
    const double* w1 = w0 + len;
    const double* w2 = w1 + len;
    const double* w3 = w2 + len;
    for (std::size_t j = 0; j < len; ++j) {
      const double a = w0[j], b = w1[j], c = w2[j], d = w3[j];
      double* dr = cs.dcol.data() + j * np;
      for (std::size_t p = 0; p < np; ++p) dr[p] += ((a * g0[p] + b * g1[p]) + (c * g2[p] + d * g3[p]));
    }
  }
  for (; oc < f; ++oc) {
    const double* gr = g + static_cast<std::size_t>(oc) * np;
    const double* wr = w + static_cast<std::size_t>(oc) * len;
    for (std::size_t j = 0; j < len; ++j) {
      const double wj = wr[j];
      double* dr = cs.dcol.data() + j * np;
      for (std::size_t p = 0; p < np; ++p) dr[p] += wj * gr[p];
    }
  }
  std::fill(din, din + s.size(), 0.0);
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      for (int ic = 0; ic < s.c; ++ic) {
        const double* row = cs.dcol.data() + ((static_cast<std::size_t>(ky) * k + kx) * s.c + ic) * np;
        for (int y = 0; y < s.h; ++y) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= s.h) continue;
          for (int x = 0; x < s.w; ++x) {
            const int ix = x + kx - pad;
            if (ix < 0 || ix >= s.w) continue;
            din[(static_cast<std::size_t>(iy) * s.w + ix) * s.c + ic] += row[static_cast<std::size_t>(y) * s.w + x];
          }
        }
      }
    }
  }
}

void maxpool_forward(const double* in, const Shape3& s, int p, double* out, std::uint32_t* arg) {
  const int oh = s.h / p;
  const int ow = s.w / p;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int c = 0; c < s.c; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::uint32_t best_i = 0;
        for (int dy = 0; dy < p; ++dy) {
          for (int dx = 0; dx < p; ++dx) {
            const auto i = static_cast<std::uint32_t>(
                ((static_cast<std::size_t>(y) * p + dy) * s.w + (x * p + dx)) * s.c + c);
            if (in[i] > best) {
              best = in[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (static_cast<std::size_t>(y) * ow + x) * s.c + c;
        out[o] = best;
        arg[o] = best_i;
      }
    }
  }
}

// Activations for one sample. acts[i] is the input of layer i; the input of
// the head layer is the logit vector.
struct Workspace {
  std::vector<std::vector<double>> acts;
  std::vector<std::vector<std::uint32_t>> argmax;
  std::vector<double> delta;
  std::vector<double> delta_prev;
  std::vector<ConvScratch> conv;  // per layer; holds the column matrix for backward

  explicit Workspace(const ModelSpec& spec) {
    const std::size_t n = spec.layers().size();
    acts.resize(n);
    argmax.resize(n);
    conv.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      acts[i].resize(spec.in_shape(i).size());
      if (spec.layers()[i].kind == LayerKind::kMaxPool) argmax[i].resize(spec.out_shape(i).size());
    }
  }
};

void check_batch(const ModelState& state, const Batch& batch) {
  if (!state.spec) throw std::invalid_argument("model state has no spec");
  if (state.params.size() != state.spec->param_count())
    throw std::invalid_argument("model state: params length does not match spec parameter count");
  if (batch.inputs.size() != batch.labels.size())
    throw std::invalid_argument("batch: inputs and labels differ in length");
  if (batch.inputs.empty()) throw std::invalid_argument("batch: empty");
  const std::size_t in = state.spec->input().size();
  const auto classes = static_cast<std::uint32_t>(state.spec->classes());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.inputs[i].size() != in)
      throw std::invalid_argument("batch: sample " + std::to_string(i) + " has " +
                                  std::to_string(batch.inputs[i].size()) + " values, spec expects " +
                                  std::to_string(in));
    if (batch.labels[i] >= classes)
      throw std::invalid_argument("batch: label " + std::to_string(batch.labels[i]) + " out of range");
  }
}

// Runs every layer up to the head; returns the logits (acts.back()).
const std::vector<double>& run_forward(const ModelState& state, std::span<const double> input, Workspace& ws) {
  const ModelSpec& spec = *state.spec;
  std::copy(input.begin(), input.end(), ws.acts[0].begin());
  const std::size_t n = spec.layers().size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const LayerSpec& l = spec.layers()[i];
    const double* in = ws.acts[i].data();
    double* out = ws.acts[i + 1].data();
    const Shape3& s = spec.in_shape(i);
    switch (l.kind) {
      case LayerKind::kConv2d:
        conv_forward(in, s, state.weights(i).data(), state.bias(i).data(), l.kernel, l.filters, out, ws.conv[i]);
        break;
      case LayerKind::kDense: {
        const double* w = state.weights(i).data();
        const double* b = state.bias(i).data();
        const std::size_t fan = s.size();
        for (int u = 0; u < l.units; ++u) {
          const double* wr = w + static_cast<std::size_t>(u) * fan;
          double acc = 0.0;
          for (std::size_t k = 0; k < fan; ++k) acc += wr[k] * in[k];
          out[u] = acc + b[u];
        }
        break;
      }
      case LayerKind::kRelu:
        for (std::size_t k = 0; k < s.size(); ++k) out[k] = in[k] > 0.0 ? in[k] : 0.0;
        break;
      case LayerKind::kMaxPool:
        maxpool_forward(in, s, l.pool, out, ws.argmax[i].data());
        break;
      case LayerKind::kFlatten:
        std::copy(in, in + s.size(), out);
        break;
      case LayerKind::kSoftmaxXent:
        break;
    }
  }
  return ws.acts.back();
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

ForwardResult forward_loss(const ModelState& state, const Batch& batch) {
  check_batch(state, batch);
  const auto classes = static_cast<std::size_t>(state.spec->classes());
  Workspace ws(*state.spec);
  ForwardResult r;
  r.logits.resize(batch.size() * classes);
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& z = run_forward(state, batch.inputs[i], ws);
    sum += log_sum_exp(z) - z[batch.labels[i]];
    std::copy(z.begin(), z.end(), r.logits.begin() + static_cast<std::ptrdiff_t>(i * classes));
  }
  r.loss = sum / static_cast<double>(batch.size());
  return r;
}

BackwardResult backward(const ModelState& state, const Batch& batch) {
  check_batch(state, batch);
  const ModelSpec& spec = *state.spec;
  const std::size_t n_layers = spec.layers().size();
  const auto classes = static_cast<std::size_t>(spec.classes());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Workspace ws(spec);
  BackwardResult r;
  r.grad.values.assign(spec.param_count(), 0.0);
  double sum = 0.0;

  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& z = run_forward(state, batch.inputs[s], ws);
    const double lse = log_sum_exp(z);
    const std::uint32_t label = batch.labels[s];
    sum += lse - z[label];

    ws.delta.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) ws.delta[c] = std::exp(z[c] - lse) * inv_n;
    ws.delta[label] -= inv_n;

    for (std::size_t i = n_layers - 1; i-- > 0;) {
      const LayerSpec& l = spec.layers()[i];
      const Shape3& in_s = spec.in_shape(i);
      const double* in = ws.acts[i].data();
      const bool need_prev = i > 0;
      ws.delta_prev.assign(in_s.size(), 0.0);
      double* dprev = ws.delta_prev.data();
      double* gw = r.grad.values.data() + spec.weight_offset(i);
      double* gb = gw + spec.weight_count(i);
      switch (l.kind) {
        case LayerKind::kConv2d:
          conv_backward(in_s, state.weights(i).data(), l.kernel, l.filters, ws.delta.data(), gw, gb,
                        need_prev ? dprev : nullptr, ws.conv[i]);
          break;
        case LayerKind::kDense: {
          const double* w = state.weights(i).data();
          const std::size_t fan = in_s.size();
          for (int u = 0; u < l.units; ++u) {
            const double g = ws.delta[static_cast<std::size_t>(u)];
            gb[u] += g;
            double* gwr = gw + static_cast<std::size_t>(u) * fan;
            const double* wr = w + static_cast<std::size_t>(u) * fan;
            for (std::size_t k = 0; k < fan; ++k) gwr[k] += g * in[k];
            if (need_prev)
              for (std::size_t k = 0; k < fan; ++k) dprev[k] += g * wr[k];
          }
          break;
        }
        case LayerKind::kRelu:
          for (std::size_t k = 0; k < in_s.size(); ++k) dprev[k] = in[k] > 0.0 ? ws.delta[k] : 0.0;
          break;
        case LayerKind::kMaxPool: {
          const auto& arg = ws.argmax[i];
          for (std::size_t k = 0; k < arg.size(); ++k) dprev[arg[k]] += ws.delta[k];
          break;
        }
        case LayerKind::kFlatten:
          std::copy(ws.delta.begin(), ws.delta.end(), dprev);
          break;
        case LayerKind::kSoftmaxXent:
          break;
      }
      if (!need_prev) break;
      std::swap(ws.delta, ws.delta_prev);
    }
  }
  r.loss = sum / static_cast<double>(batch.size());
  return r;
}

void sgd_step_inplace(ModelState& state, const Gradient& grad, double eta) {
  if (grad.values.size() != state.params.size())
    throw std::invalid_argument("sgd_step: gradient length " + std::to_string(grad.values.size()) +
                                " does not match params length " + std::to_string(state.params.size()));
  for (std::size_t i = 0; i < state.params.size(); ++i) state.params[i] -= eta * grad.values[i];
}

ModelState sgd_step(const ModelState& state, const Gradient& grad, double eta) {
  ModelState next = state;
  sgd_step_inplace(next, grad, eta);
  return next;
}

std::uint32_t argmax(std::span<const double> logits) {
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

double accuracy(const ModelState& state, const Batch& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
  check_batch(state, dataset);
  Workspace ws(*state.spec);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (argmax(run_forward(state, dataset.inputs[i], ws)) == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double dataset_loss(const ModelState& state, const Batch& dataset) {
  check_batch(state, dataset);
  Workspace ws(*state.spec);
  double sum = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& z = run_forward(state, dataset.inputs[i], ws);
    sum += log_sum_exp(z) - z[dataset.labels[i]];
  }
  return sum / static_cast<double>(dataset.size());
}

std::vector<LayerTensors> unflatten(const ModelState& state) {
  std::vector<LayerTensors> out(state.spec->layers().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto w = state.weights(i);
    auto b = state.bias(i);
    out[i].weights.assign(w.begin(), w.end());
    out[i].bias.assign(b.begin(), b.end());
  }
  return out;
}

ModelState flatten(std::shared_ptr<const ModelSpec> spec, const std::vector<LayerTensors>& layers) {
  if (layers.size() != spec->layers().size()) throw std::invalid_argument("flatten: layer count mismatch");
  ModelState s{spec, {}};
  s.params.reserve(spec->param_count());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weights.size() != spec->weight_count(i) || layers[i].bias.size() != spec->bias_count(i))
      throw std::invalid_argument("flatten: tensor size mismatch at layer " + std::to_string(i));
    s.params.insert(s.params.end(), layers[i].weights.begin(), layers[i].weights.end());
    s.params.insert(s.params.end(), layers[i].bias.begin(), layers[i].bias.end());
  }
  return s;
}

void write_params(std::ostream& out, std::span<const double> params) {
  const std::uint64_t n = params.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw std::runtime_error("write_params: stream failure");
}

std::vector<double> read_params(std::istream& in) {
  std::uint64_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n)) throw std::runtime_error("read_params: missing length header");
  std::vector<double> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw std::runtime_error("read_params: truncated blob, expected " + std::to_string(n) + " values");
  return v;
}

}  // namespace hetsim
