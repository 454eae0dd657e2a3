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

#include <cmath>
#include <sstream>

#include "grad_check.hpp"
#include "hetsim/nn.hpp"
#include "test_util.hpp"

namespace hetsim {
namespace {

using testing::bit_equal;
using testing::random_batch;

ModelSpec dense_spec(int in, int out) {
  return ModelSpec({1, 1, in}, out, {LayerSpec::dense(out), LayerSpec::softmax_xent()});
}

TEST(ModelSpecTest, SmallCnnShapes) {
  ModelSpec s = ModelSpec::small_cnn({16, 16, 3}, 4);
  EXPECT_EQ(s.param_count(), (8 * 27 + 8) + (16 * 72 + 16) + (4 * 4 * 16 * 4 + 4));
  EXPECT_EQ(s.out_shape(s.layers().size() - 1).size(), 4u);
}

TEST(ModelSpecTest, RejectsInconsistentSpecs) {
  EXPECT_THROW(ModelSpec({4, 4, 1}, 1, {LayerSpec::dense(1), LayerSpec::softmax_xent()}), std::invalid_argument);
  EXPECT_THROW(ModelSpec({4, 4, 1}, 3, {LayerSpec::conv2d(2, 4), LayerSpec::flatten(), LayerSpec::dense(3),
                                       LayerSpec::softmax_xent()}),
               std::invalid_argument);
  EXPECT_THROW(ModelSpec({4, 4, 1}, 3, {LayerSpec::flatten(), LayerSpec::dense(5), LayerSpec::softmax_xent()}),
               std::invalid_argument);
  EXPECT_THROW(ModelSpec({4, 4, 1}, 3, {LayerSpec::flatten(), LayerSpec::dense(3)}), std::invalid_argument);
}

TEST(ModelSpecTest, TextRoundTrip) {
  ModelSpec s = ModelSpec::small_cnn({8, 8, 3}, 5);
  ModelSpec back = ModelSpec::from_text(s.to_text());
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.param_count(), s.param_count());
}

TEST(InitTest, DeterministicPerSeedAndZeroBias) {
  ModelSpec s = dense_spec(4, 2);
  ModelState a = init_params(s, 7);
  ModelState b = init_params(s, 7);
  ModelState c = init_params(s, 8);
  EXPECT_TRUE(bit_equal(a.params, b.params));
  EXPECT_FALSE(bit_equal(a.params, c.params));
  ModelSpec cnn = ModelSpec::small_cnn({8, 8, 3}, 4);
  ModelState st = init_params(cnn, 3);
  for (std::size_t i = 0; i < cnn.layers().size(); ++i)
    for (double v : st.bias(i)) EXPECT_EQ(v, 0.0);
  const double bound = 1.0 / std::sqrt(4.0);
  for (double v : a.weights(0)) EXPECT_LE(std::abs(v), bound);
}

TEST(ForwardTest, UniformLogitsGiveLogC) {
  ModelSpec s = dense_spec(3, 12);
  ModelState st = init_params(s, 1);
  std::fill(st.params.begin(), st.params.end(), 0.0);
  std::vector<double> x = {0.2, 0.4, 0.6};
  Batch b{{x}, {5}};
  EXPECT_NEAR(forward_loss(st, b).loss, std::log(12.0), 1e-12);
}

TEST(ForwardTest, ConfidentCorrectLogitsApproachZero) {
  ModelSpec s = dense_spec(1, 3);
  ModelState st = init_params(s, 1);
  st.params = {0.0, 0.0, 0.0, 0.0, 50.0, 0.0};  // weights then bias; class 1 dominates
  std::vector<double> x = {1.0};
  Batch b{{x}, {1}};
  EXPECT_LT(forward_loss(st, b).loss, 1e-20);
}

TEST(ForwardTest, HandComputedTwoSampleBatch) {
  ModelSpec s = dense_spec(2, 2);
  ModelState st = init_params(s, 1);
  st.params = {1.0, -1.0, 0.5, 2.0, 0.1, -0.2};
  std::vector<double> x1 = {1.0, 0.0}, x2 = {0.5, 0.5};
  Batch b{{x1, x2}, {0, 1}};
  // z1 = (1.1, 0.3), z2 = (0.1, 1.05)
  const double l1 = std::log(std::exp(1.1) + std::exp(0.3)) - 1.1;
  const double l2 = std::log(std::exp(0.1) + std::exp(1.05)) - 1.05;
  ForwardResult r = forward_loss(st, b);
  EXPECT_NEAR(r.loss, (l1 + l2) / 2.0, 1e-14);
  EXPECT_NEAR(r.logits[0], 1.1, 1e-15);
  EXPECT_NEAR(r.logits[3], 1.05, 1e-15);
}

TEST(ForwardTest, ShapeMismatchThrows) {
  ModelSpec s = dense_spec(2, 2);
  ModelState st = init_params(s, 1);
  std::vector<double> x = {1.0, 0.0, 3.0};
  EXPECT_THROW(forward_loss(st, Batch{{x}, {0}}), std::invalid_argument);
  std::vector<double> y = {1.0, 0.0};
  EXPECT_THROW(forward_loss(st, Batch{{y}, {2}}), std::invalid_argument);
  EXPECT_THROW(forward_loss(st, Batch{}), std::invalid_argument);
}

TEST(ForwardTest, BitDeterministic) {
  ModelSpec s = ModelSpec::small_cnn({8, 8, 3}, 4);
  ModelState st = init_params(s, 11);
  RngStream rng(2);
  auto b = random_batch(s, 6, rng);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(forward_loss(st, b.batch).loss),
            std::bit_cast<std::uint64_t>(forward_loss(st, b.batch).loss));
}

TEST(BackwardTest, FiniteDifferenceOracle) {
  RngStream rng(stream_seed(99, "gradcheck-unit"));
  std::size_t skipped = 0, total = 0;
  for (int t = 0; t < 30; ++t) {
    ModelSpec spec = testing::random_spec(rng);
    ModelState st = testing::random_state(spec, rng);
    auto b = random_batch(spec, 1 + rng.below(4), rng);
    auto r = testing::grad_check(st, b.batch);
    EXPECT_LT(r.max_rel_error, 1e-4) << spec.to_text();
    EXPECT_LT(r.max_forward_diff, 1e-12);
    skipped += r.kink_skipped;
    total += r.params;
  }
  EXPECT_LT(static_cast<double>(skipped), 0.01 * static_cast<double>(total));
}

TEST(BackwardTest, SmallCnnAgreesWithReference) {
  ModelSpec spec = ModelSpec::small_cnn({8, 8, 3}, 4);
  RngStream rng(5);
  ModelState st = testing::random_state(spec, rng, 0.3);
  auto b = random_batch(spec, 3, rng);
  auto r = testing::grad_check(st, b.batch);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_LT(r.kink_skipped, r.params / 50);
}

TEST(BackwardTest, DuplicatedBatchSameGradient) {
  ModelSpec spec = ModelSpec::small_cnn({8, 8, 3}, 4);
  ModelState st = init_params(spec, 4);
  RngStream rng(6);
  auto b = random_batch(spec, 3, rng);
  Batch dup = b.batch;
  for (std::size_t i = 0; i < b.batch.size(); ++i) {
    dup.inputs.push_back(b.batch.inputs[i]);
    dup.labels.push_back(b.batch.labels[i]);
  }
  auto g1 = backward(st, b.batch).grad.values;
  auto g2 = backward(st, dup).grad.values;
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g2[i], 1e-14 * (1.0 + std::abs(g1[i])));
}

TEST(BackwardTest, SymmetricInputsSymmetricGradient) {
  ModelSpec s = dense_spec(2, 2);
  ModelState st = init_params(s, 1);
  std::fill(st.params.begin(), st.params.end(), 0.0);
  std::vector<double> x = {0.7, 0.7};
  auto g = backward(st, Batch{{x}, {0}}).grad.values;
  // [w00 w01 w10 w11 b0 b1]: swapping the two inputs leaves each row unchanged.
  EXPECT_EQ(g[0], g[1]);
  EXPECT_EQ(g[2], g[3]);
  EXPECT_DOUBLE_EQ(g[0], -g[2]);
}

TEST(SgdTest, ArithmeticExample) {
  ModelState st{nullptr, {1.0, 2.0}};
  ModelState out = sgd_step(st, Gradient{{0.5, -1.0}}, 0.1);
  EXPECT_DOUBLE_EQ(out.params[0], 0.95);
  EXPECT_DOUBLE_EQ(out.params[1], 2.1);
  EXPECT_TRUE(bit_equal(sgd_step(st, Gradient{{0.5, -1.0}}, 0.0).params, st.params));
  EXPECT_THROW(sgd_step(st, Gradient{{1.0}}, 0.1), std::invalid_argument);
}

TEST(SgdTest, SmallStepDecreasesLoss) {
  RngStream rng(stream_seed(3, "descent"));
  int failures = 0;
  for (int t = 0; t < 20; ++t) {
    ModelSpec spec = testing::random_spec(rng);
    ModelState st = init_params(spec, rng.next());
    auto b = random_batch(spec, 4, rng);
    auto r = backward(st, b.batch);
    if (!(forward_loss(sgd_step(st, r.grad, 1e-4), b.batch).loss < r.loss)) ++failures;
  }
  EXPECT_LE(failures, 1);
}

TEST(SgdTest, TwoStepsDifferFromSummedStepOnNonlinearModel) {
  ModelSpec spec = ModelSpec::small_cnn({8, 8, 3}, 4);
  ModelState st = init_params(spec, 8);
  RngStream rng(9);
  auto b = random_batch(spec, 4, rng);
  const double eta = 0.5;
  Gradient g1 = backward(st, b.batch).grad;
  ModelState s1 = sgd_step(st, g1, eta);
  Gradient g2 = backward(s1, b.batch).grad;
  ModelState two = sgd_step(s1, g2, eta);
  Gradient g2_at_start = backward(st, b.batch).grad;
  Gradient sum = g1;
  for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += g2_at_start.values[i];
  ModelState one = sgd_step(st, sum, eta);
  EXPECT_FALSE(bit_equal(two.params, one.params));
}

TEST(AccuracyTest, ExamplesAndTies) {
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0}), 1u);
  ModelSpec s = dense_spec(1, 3);
  ModelState st = init_params(s, 1);
  st.params = {0.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  std::vector<double> x = {1.0};
  EXPECT_EQ(accuracy(st, Batch{{x, x}, {1, 1}}), 1.0);
  EXPECT_EQ(accuracy(st, Batch{{x}, {2}}), 0.0);
  std::fill(st.params.begin(), st.params.end(), 0.0);
  EXPECT_EQ(accuracy(st, Batch{{x}, {0}}), 1.0);  // all tied: class 0
  EXPECT_THROW(accuracy(st, Batch{}), std::invalid_argument);
}

TEST(AccuracyTest, RandomInitNearChance) {
  ModelSpec spec = ModelSpec::small_cnn({8, 8, 3}, 12);
  ModelState st = init_params(spec, 21);
  RngStream rng(22);
  const std::size_t n = 2400;
  auto b = random_batch(spec, n, rng);
  for (std::size_t i = 0; i < n; ++i) b.batch.labels[i] = static_cast<std::uint32_t>(i % 12);
  const double p = 1.0 / 12.0;
  EXPECT_NEAR(accuracy(st, b.batch), p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(SerializationTest, ParamsAndTensorsRoundTrip) {
  ModelSpec spec = ModelSpec::small_cnn({8, 8, 3}, 4);
  ModelState st = init_params(spec, 30);
  std::stringstream ss;
  write_params(ss, st.params);
  EXPECT_EQ(ss.str().size(), 8 + 8 * st.params.size());
  EXPECT_TRUE(bit_equal(read_params(ss), st.params));
  ModelState back = flatten(st.spec, unflatten(st));
  EXPECT_TRUE(bit_equal(back.params, st.params));
  std::stringstream truncated(ss.str().substr(0, 12));
  EXPECT_THROW(read_params(truncated), std::runtime_error);
}

}  // namespace
}  // namespace hetsim
