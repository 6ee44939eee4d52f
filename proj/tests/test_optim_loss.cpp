#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "attrnet/adam.hpp"
#include "attrnet/losses.hpp"
#include "support/fd_oracle.hpp"
#include "support/random_tensor.hpp"

using namespace attrnet;

namespace {

NamedTensors<double> scalar_param(double value, double grad) {
  NamedTensors<double> p;
  Tensor<double> t({1}, {value});
  t.set_requires_grad(true);
  t.grad()[0] = grad;
  p.insert("theta", t);
  return p;
}

}  // namespace

// ---- Adam ---------------------------------------------------------------------

TEST(Adam, DefaultsArePinned) {
  AdamConfig cfg;
  EXPECT_EQ(cfg.lr, 1e-3);
  EXPECT_EQ(cfg.beta1, 0.9);
  EXPECT_EQ(cfg.beta2, 0.999);
  EXPECT_EQ(cfg.eps, 1e-8);
}

TEST(Adam, ZeroGradientIsNoOpButCountsStep) {
  Rng rng(1);
  NamedTensors<float> params;
  auto w = attrnet::testing::random_tensor<float>({3, 4}, rng).set_requires_grad(true);
  params.insert("w", w);
  const auto before = w.clone();
  w.grad();
  AdamState<float> state;
  adam_step(params, state, {});
  EXPECT_TRUE(exactly_equal(params.at("w"), before));
  EXPECT_EQ(state.t, 1u);
}

TEST(Adam, FirstStepMagnitudeIsLearningRateForAnyScale) {
  for (double g : {1e-3, 1.0, 1e3}) {
    auto p = scalar_param(0.0, g);
    AdamState<double> state;
    adam_step(p, state, {});
    EXPECT_NEAR(-p.at("theta")[0], 1e-3, 1e-6) << "g=" << g;
  }
}

TEST(Adam, TwoStepsMatchPinnedTrace) {
  // Reference computed at 40 significant digits for theta0 = 1 with
  // gradients 0.5 then -0.25.
  auto p = scalar_param(1.0, 0.5);
  AdamState<double> state;
  adam_step(p, state, {});
  EXPECT_NEAR(p.at("theta")[0], 0.9990000000199999996, 1e-15);
  EXPECT_NEAR(state.m[0][0], 0.05, 1e-15);
  EXPECT_NEAR(state.v[0][0], 0.00025, 1e-15);
  p.at("theta").grad()[0] = -0.25;
  adam_step(p, state, {});
  EXPECT_NEAR(p.at("theta")[0], 0.9987336629870784616, 1e-15);
  EXPECT_EQ(state.t, 2u);
}

TEST(Adam, MatchesScalarReferenceOverManySteps) {
  // Independent scalar Adam.
  double theta_ref = 0.3, m = 0, v = 0;
  auto p = scalar_param(0.3, 0.0);
  AdamState<double> state;
  AdamConfig cfg;
  for (int t = 1; t <= 50; ++t) {
    const double g = std::sin(0.7 * t) * 3.0;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta_ref -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    p.at("theta").grad()[0] = g;
    adam_step(p, state, cfg);
  }
  EXPECT_NEAR(p.at("theta")[0], theta_ref, 1e-14);
}

TEST(Adam, NonFiniteGradientAbortsWithoutSideEffects) {
  auto p = scalar_param(2.0, 1.0);
  AdamState<double> state;
  adam_step(p, state, {});
  const double theta = p.at("theta")[0];
  const auto m = state.m;
  p.at("theta").grad()[0] = std::nan("");
  EXPECT_THROW(adam_step(p, state, {}), NumericError);
  EXPECT_EQ(p.at("theta")[0], theta);
  EXPECT_EQ(state.t, 1u);
  EXPECT_EQ(state.m, m);
}

TEST(Adam, StateShapeMismatchIsRejected) {
  auto p = scalar_param(2.0, 1.0);
  AdamState<double> state;
  state.m = {{0.0, 0.0}};
  state.v = {{0.0, 0.0}};
  state.t = 3;
  EXPECT_THROW(adam_step(p, state, {}), DimensionError);
}

TEST(Adam, InvalidConfigRejected) {
  auto p = scalar_param(2.0, 1.0);
  AdamState<double> state;
  EXPECT_THROW(adam_step(p, state, AdamConfig{0.0}), ValidationError);
  EXPECT_THROW(adam_step(p, state, AdamConfig{1e-3, 1.0}), ValidationError);
}

// ---- crossentropy ---------------------------------------------------------------

TEST(CategoricalCrossentropy, PerfectPredictionIsZero) {
  Tensor<double> p({2, 3}, {1, 0, 0, 0, 0, 1});
  EXPECT_NEAR(categorical_crossentropy(p, p), 0.0, 1e-6);
}

TEST(CategoricalCrossentropy, UniformIsLnK) {
  Tensor<double> p({1, 3}, std::vector<double>(3, 1.0 / 3.0));
  Tensor<double> y({1, 3}, {0, 1, 0});
  EXPECT_NEAR(categorical_crossentropy(p, y), std::log(3.0), 1e-12);
}

TEST(CategoricalCrossentropy, HandCase) {
  Tensor<double> p({2, 2}, {0.5, 0.5, 0.9, 0.1});
  Tensor<double> y({2, 2}, {1, 0, 1, 0});
  EXPECT_NEAR(categorical_crossentropy(p, y), (-std::log(0.5) - std::log(0.9)) / 2, 1e-12);
  EXPECT_NEAR(categorical_crossentropy(p, y), 0.3993, 1e-4);
}

TEST(CategoricalCrossentropy, InvalidOneHotNamesRow) {
  Tensor<double> p({2, 2}, {0.5, 0.5, 0.5, 0.5});
  Tensor<double> y({2, 2}, {1, 0, 1, 1});
  try {
    categorical_crossentropy(p, y);
    FAIL();
  } catch (const LabelError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(CategoricalCrossentropy, NonNegativeAndZeroOnlyAtOneHot) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    auto logits = attrnet::testing::random_tensor<double>({4, 5}, rng, -5, 5);
    auto p = ops::softmax_rows(logits);
    const std::vector<int> labels{0, 1, 2, 4};
    const double l = categorical_crossentropy(p, one_hot<double>(labels, 5));
    EXPECT_GT(l, 0.0);
  }
  // At the clamp: loss is -log(1 - 1e-7), not exactly zero.
  Tensor<double> p({1, 2}, {1, 0});
  EXPECT_LE(categorical_crossentropy(p, p), 1.1e-7);
}

TEST(CategoricalCrossentropy, FusedValueAgreesWithProbabilityForm) {
  Rng rng(3);
  auto logits = attrnet::testing::random_tensor<double>({6, 4}, rng, -4, 4);
  const std::vector<int> labels{0, 1, 2, 3, 0, 1};
  auto onehot = one_hot<double>(labels, 4);
  EXPECT_NEAR(ops::softmax_cross_entropy(logits, onehot).item(),
              categorical_crossentropy(ops::softmax_rows(logits), onehot), 1e-12);
}

TEST(CategoricalCrossentropy, FusedGradientMatchesComposedFiniteDifferences) {
  Rng rng(4);
  auto logits = attrnet::testing::random_tensor<double>({5, 3}, rng, -3, 3);
  const std::vector<int> labels{2, 0, 1, 1, 0};
  auto onehot = one_hot<double>(labels, 3);
  logits.set_requires_grad(true);
  Graph<double> g;
  backward(ops::softmax_cross_entropy(logits, onehot, &g), g);
  const std::vector<double> analytic(logits.grad().begin(), logits.grad().end());
  // Oracle differentiates the unfused composition softmax -> CCE.
  auto numeric = attrnet::testing::central_difference(
      [&] { return categorical_crossentropy(ops::softmax_rows(logits), onehot); }, logits.mutable_data());
  EXPECT_LE(attrnet::testing::max_rel_error(analytic, numeric), 1e-4);
}

TEST(BinaryCrossentropy, ExactPredictionIsNearZero) {
  Tensor<double> y({3, 1}, {1, 0, 1});
  EXPECT_LE(binary_crossentropy(y, y), 1e-6);
}

TEST(BinaryCrossentropy, HalfIsLn2) {
  Tensor<double> p({4, 1}, std::vector<double>(4, 0.5));
  Tensor<double> y({4, 1}, {1, 0, 0, 1});
  EXPECT_NEAR(binary_crossentropy(p, y), std::log(2.0), 1e-12);
}

TEST(BinaryCrossentropy, HandCase) {
  Tensor<double> p({2, 1}, {0.9, 0.2});
  Tensor<double> y({2, 1}, {1, 0});
  EXPECT_NEAR(binary_crossentropy(p, y), (-std::log(0.9) - std::log(0.8)) / 2, 1e-12);
  EXPECT_NEAR(binary_crossentropy(p, y), 0.1643, 1e-4);
}

TEST(BinaryCrossentropy, LabelOutsideZeroOneRejected) {
  Tensor<double> p({2, 1}, {0.9, 0.2});
  Tensor<double> y({2, 1}, {1, 2});
  EXPECT_THROW(binary_crossentropy(p, y), LabelError);
  EXPECT_THROW(ops::sigmoid_binary_cross_entropy(p, y), LabelError);
}

TEST(BinaryCrossentropy, FusedValueAgreesWithProbabilityForm) {
  Tensor<double> z({3, 1}, {-2.0, 0.3, 4.0});
  Tensor<double> y({3, 1}, {0, 1, 1});
  EXPECT_NEAR(ops::sigmoid_binary_cross_entropy(z, y).item(), binary_crossentropy(ops::sigmoid(z), y), 1e-12);
}

// ---- accuracy --------------------------------------------------------------------

TEST(Accuracy, AllCorrect) {
  Tensor<double> p({3, 3}, {0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6});
  const std::vector<int> labels{0, 1, 2};
  EXPECT_EQ(accuracy(p, labels, TaskKind::multiclass), 1.0);
}

TEST(Accuracy, BinaryThreshold) {
  Tensor<double> p({2, 1}, {0.6, 0.4});
  const std::vector<int> labels{1, 1};
  EXPECT_EQ(accuracy(p, labels, TaskKind::binary), 0.5);
}

TEST(Accuracy, ArgmaxTieGoesToLowestIndex) {
  Tensor<double> p({1, 3}, {0.2, 0.4, 0.4});
  EXPECT_EQ(predict_classes(p, TaskKind::multiclass)[0], 1);
  Tensor<double> q({1, 1}, {0.5});
  EXPECT_EQ(predict_classes(q, TaskKind::binary)[0], 1);
}

TEST(Accuracy, ConfusionMatrixHandTally) {
  // truth:     0 0 1 1 2 2
  // predicted: 0 1 1 1 0 2
  Tensor<double> p({6, 3}, {0.9, 0.05, 0.05,  //
                            0.1, 0.8, 0.1,    //
                            0.2, 0.7, 0.1,    //
                            0.3, 0.4, 0.3,    //
                            0.5, 0.3, 0.2,    //
                            0.1, 0.1, 0.8});
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  MetricAccumulator acc(3);
  EXPECT_NEAR(accuracy(p, labels, TaskKind::multiclass, &acc), 4.0 / 6.0, 1e-15);
  const std::vector<std::vector<std::size_t>> expected{{1, 1, 0}, {0, 2, 0}, {1, 0, 1}};
  EXPECT_EQ(acc.confusion_matrix(), expected);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto row = acc.confusion_matrix()[c];
    EXPECT_EQ(std::accumulate(row.begin(), row.end(), std::size_t{0}), 2u);
  }
}

TEST(Accuracy, EmptyInputIsUndefined) {
  Tensor<double> p({1, 2}, {0.5, 0.5});
  EXPECT_THROW(accuracy(p, std::span<const int>(), TaskKind::multiclass), ContractError);
  EXPECT_THROW(MetricAccumulator(2).accuracy(), ContractError);
}

TEST(Accuracy, PermutationInvariant) {
  Rng rng(5);
  auto p = ops::softmax_rows(attrnet::testing::random_tensor<double>({40, 4}, rng, -2, 2));
  std::vector<int> labels(40);
  for (auto& l : labels) l = static_cast<int>(rng.below(4));
  const double base = accuracy(p, labels, TaskKind::multiclass);
  std::vector<std::size_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(perm);
    Tensor<double> q({40, 4});
    std::vector<int> l2(40);
    for (std::size_t i = 0; i < 40; ++i) {
      std::copy_n(p.ptr() + perm[i] * 4, 4, q.mutable_ptr() + i * 4);
      l2[i] = labels[perm[i]];
    }
    EXPECT_EQ(accuracy(q, l2, TaskKind::multiclass), base);
  }
}

TEST(Accuracy, AccumulatorsMergeAssociatively) {
  MetricAccumulator a(2), b(2), c(2), all(2);
  const std::vector<int> t{0, 1, 1, 0, 1, 0}, p{0, 1, 0, 0, 1, 1};
  for (std::size_t i = 0; i < 6; ++i) {
    (i < 2 ? a : i < 4 ? b : c).add(t[i], p[i]);
    all.add(t[i], p[i]);
  }
  MetricAccumulator left = a;
  left.merge(b);
  left.merge(c);
  MetricAccumulator right = b;
  right.merge(c);
  MetricAccumulator right2 = a;
  right2.merge(right);
  EXPECT_EQ(left.confusion_matrix(), all.confusion_matrix());
  EXPECT_EQ(right2.confusion_matrix(), all.confusion_matrix());
  EXPECT_EQ(left.correct(), all.correct());
}
