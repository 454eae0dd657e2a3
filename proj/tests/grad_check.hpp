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

#include <algorithm>
#include <cmath>
#include <vector>

#include "hetsim/nn.hpp"
#include "hetsim/rng.hpp"
#include "test_util.hpp"

namespace hetsim::testing {

// A random small architecture: one or two conv blocks (optionally pooled),
// an optional hidden dense layer, then the classifier head.
inline ModelSpec random_spec(RngStream& rng) {
  const int h = 3 + static_cast<int>(rng.below(4));
  const int w = 3 + static_cast<int>(rng.below(4));
  const int c = 1 + static_cast<int>(rng.below(3));
  const int classes = 2 + static_cast<int>(rng.below(4));
  std::vector<LayerSpec> layers;
  int ch = h, cw = w;
  const int blocks = 1 + static_cast<int>(rng.below(2));
  for (int b = 0; b < blocks; ++b) {
    layers.push_back(LayerSpec::conv2d(rng.below(2) ? 3 : 1, 1 + static_cast<int>(rng.below(4))));
    layers.push_back(LayerSpec::relu());
    if (ch >= 2 && cw >= 2 && rng.below(2)) {
      layers.push_back(LayerSpec::maxpool(2));
      ch /= 2;
      cw /= 2;
    }
  }
  layers.push_back(LayerSpec::flatten());
  if (rng.below(2)) {
    layers.push_back(LayerSpec::dense(2 + static_cast<int>(rng.below(6))));
    layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::dense(classes));
  layers.push_back(LayerSpec::softmax_xent());
  return ModelSpec({h, w, c}, classes, std::move(layers));
}

// Every parameter, biases included, drawn from U(-scale, scale). The default
// initialisation zeroes biases, which puts dead units exactly on a ReLU kink.
inline ModelState random_state(const ModelSpec& spec, RngStream& rng, double scale = 0.5) {
  ModelState st{std::make_shared<const ModelSpec>(spec), std::vector<double>(spec.param_count())};
  for (double& v : st.params) v = rng.uniform(-scale, scale);
  return st;
}

// Straightforward per-sample forward pass written independently of the
// library kernels. Besides the mean loss it records the activation pattern
// (ReLU signs and max-pool winners) so callers can tell when a perturbation
// moved the point across a non-differentiable kink.
struct ReferenceForward {
  double loss = 0.0;
  std::vector<std::uint32_t> pattern;
};

inline ReferenceForward reference_forward(const ModelSpec& spec, const std::vector<double>& params,
                                          const Batch& batch) {
  ReferenceForward out;
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    std::vector<double> a(batch.inputs[s].begin(), batch.inputs[s].end());
    for (std::size_t i = 0; i + 1 < spec.layers().size(); ++i) {
      const LayerSpec& l = spec.layers()[i];
      const Shape3 in = spec.in_shape(i);
      const Shape3 os = spec.out_shape(i);
      const double* w = params.data() + spec.weight_offset(i);
      const double* b = w + spec.weight_count(i);
      std::vector<double> next(os.size(), 0.0);
      auto at = [&](int y, int x, int c) { return a[(static_cast<std::size_t>(y) * in.w + x) * in.c + c]; };
      switch (l.kind) {
        case LayerKind::kConv2d: {
          const int k = l.kernel, pad = k / 2;
          for (int y = 0; y < os.h; ++y)
            for (int x = 0; x < os.w; ++x)
              for (int f = 0; f < os.c; ++f) {
                double acc = b[f];
                for (int ky = 0; ky < k; ++ky)
                  for (int kx = 0; kx < k; ++kx)
                    for (int c = 0; c < in.c; ++c) {
                      const int iy = y + ky - pad, ix = x + kx - pad;
                      if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                      acc += w[((static_cast<std::size_t>(f) * k + ky) * k + kx) * in.c + c] * at(iy, ix, c);
                    }
                next[(static_cast<std::size_t>(y) * os.w + x) * os.c + f] = acc;
              }
          break;
        }
        case LayerKind::kDense:
          for (std::size_t u = 0; u < os.size(); ++u) {
            double acc = b[u];
            for (std::size_t j = 0; j < a.size(); ++j) acc += w[u * a.size() + j] * a[j];
            next[u] = acc;
          }
          break;
        case LayerKind::kRelu:
          for (std::size_t j = 0; j < a.size(); ++j) {
            out.pattern.push_back(a[j] > 0.0);
            next[j] = a[j] > 0.0 ? a[j] : 0.0;
          }
          break;
        case LayerKind::kMaxPool:
          for (int y = 0; y < os.h; ++y)
            for (int x = 0; x < os.w; ++x)
              for (int c = 0; c < os.c; ++c) {
                std::uint32_t best = 0;
                double v = at(y * l.pool, x * l.pool, c);
                for (int dy = 0; dy < l.pool; ++dy)
                  for (int dx = 0; dx < l.pool; ++dx)
                    if (at(y * l.pool + dy, x * l.pool + dx, c) > v) {
                      v = at(y * l.pool + dy, x * l.pool + dx, c);
                      best = static_cast<std::uint32_t>(dy * l.pool + dx);
                    }
                out.pattern.push_back(best);
                next[(static_cast<std::size_t>(y) * os.w + x) * os.c + c] = v;
              }
          break;
        case LayerKind::kFlatten:
          next = a;
          break;
        case LayerKind::kSoftmaxXent:
          break;
      }
      a = std::move(next);
    }
    double m = a[0];
    for (double v : a) m = std::max(m, v);
    double z = 0.0;
    for (double v : a) z += std::exp(v - m);
    total += m + std::log(z) - a[batch.labels[s]];
  }
  out.loss = total / static_cast<double>(batch.size());
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t params = 0;
  std::size_t kink_skipped = 0;  // entries whose +-h probe changed the activation pattern
  double max_forward_diff = 0.0; // |reference loss - forward_loss| at the base point
};

// Central differences with step h of the reference forward against
// backward(). The per-entry error is |a - n| / max(|a|, |n|, floor); the
// floor keeps gradients that are zero up to rounding from dividing noise by
// noise.
inline GradCheck grad_check(const ModelState& state, const Batch& batch, double h = 1e-4, double floor = 1e-6) {
  GradCheck out;
  const ModelSpec& spec = *state.spec;
  const auto analytic = backward(state, batch).grad.values;
  const ReferenceForward base = reference_forward(spec, state.params, batch);
  out.max_forward_diff = std::abs(base.loss - forward_loss(state, batch).loss);
  std::vector<double> probe = state.params;
  out.params = probe.size();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const ReferenceForward up = reference_forward(spec, probe, batch);
    probe[i] = orig - h;
    const ReferenceForward down = reference_forward(spec, probe, batch);
    probe[i] = orig;
    if (up.pattern != base.pattern || down.pattern != base.pattern) {
      ++out.kink_skipped;
      continue;
    }
    const double numeric = (up.loss - down.loss) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[i] - numeric) / denom);
  }
  return out;
}

}  // namespace hetsim::testing
