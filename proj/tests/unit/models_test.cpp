// Copyright 2026 The Stackprop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

#include "stackprop/error.hpp"
#include "stackprop/features.hpp"
#include "stackprop/metrics.hpp"
#include "stackprop/models.hpp"
#include "test_util.hpp"

namespace stackprop {
namespace {

Targets RegressionTargets(std::vector<double> values) {
  Targets y;
  y.task = Task::kRegression;
  y.values = std::move(values);
  return y;
}

Targets ClassTargets(std::vector<double> values, std::size_t num_classes) {
  Targets y;
  y.task = Task::kClassification;
  y.num_classes = num_classes;
  y.values = std::move(values);
  return y;
}

// Two noisy Gaussian blobs in 3 dimensions, three classes.
void Blobs(std::size_t n, std::uint64_t seed, Matrix& x, Targets& y) {
  Rng rng(seed);
  x.resize(static_cast<Eigen::Index>(n), 3);
  y = ClassTargets({}, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<double>(i % 3);
    for (Eigen::Index j = 0; j < 3; ++j) {
      x(static_cast<Eigen::Index>(i), j) = rng.Normal() + (j == static_cast<Eigen::Index>(c) ? 2.5 : 0.0);
    }
    y.values.push_back(c);
  }
}

TEST(EncoderTest, StandardizesNumeric) {
  FeatureTable t(3);
  t.AddNumeric("a", {1, 2, 3});
  const auto enc = EncodeFeatures(t, {0, 1, 2});
  ASSERT_EQ(enc.values.cols(), 1);
  const double z = std::sqrt(1.5);
  EXPECT_NEAR(enc.values(0, 0), -z, 1e-12);
  EXPECT_NEAR(enc.values(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(enc.values(2, 0), z, 1e-12);
  EXPECT_NEAR(z, 1.2247, 1e-4);
}

TEST(EncoderTest, StatisticsComeFromFitRowsOnly) {
  FeatureTable t(4);
  t.AddNumeric("a", {0, 2, 100, std::nan("")});
  const auto enc = EncodeFeatures(t, {0, 1});
  EXPECT_NEAR(enc.values(0, 0), -1.0, 1e-12);
  EXPECT_NEAR(enc.values(2, 0), 99.0, 1e-12);
  EXPECT_NEAR(enc.values(3, 0), 0.0, 1e-12);
}

TEST(EncoderTest, OneHotCategorical) {
  FeatureTable t(3);
  t.AddCategorical("c", {"a", "b", "a"});
  const auto enc = EncodeFeatures(t, {0, 1, 2});
  Matrix expected(3, 2);
  expected << 1, 0, 0, 1, 1, 0;
  EXPECT_EQ(enc.values, expected);
}

TEST(EncoderTest, ManyLevelsUseFrequency) {
  const std::size_t n = 80;
  std::vector<std::string> levels;
  for (std::size_t i = 0; i < n; ++i) levels.push_back("l" + std::to_string(i % 40));
  FeatureTable t(n);
  t.AddCategorical("c", levels);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto enc = EncodeFeatures(t, rows);
  ASSERT_EQ(enc.values.cols(), 1);
  EXPECT_NEAR(enc.values(0, 0), 2.0 / 80.0, 1e-15);
}

TEST(EncoderTest, EmptyTextIsZero) {
  FeatureTable t(2);
  t.AddText("t", {"", "Graph graph nodes!"});
  EncoderOptions options;
  options.text_buckets = 64;
  const auto enc = EncodeFeatures(t, {0, 1}, options);
  ASSERT_EQ(enc.values.cols(), 64);
  EXPECT_EQ(enc.values.row(0).cwiseAbs().sum(), 0.0);
  EXPECT_NEAR(enc.values.row(1).norm(), 1.0, 1e-12);
  EXPECT_EQ(Tokenize("Graph graph nodes!"), (std::vector<std::string>{"graph", "graph", "nodes"}));
}

TEST(EncoderTest, DefaultTextBuckets) {
  FeatureTable t(1);
  t.AddText("t", {"x"});
  EXPECT_EQ(EncodeFeatures(t, {0}).values.cols(), 1 << 14);
}

TEST(EncoderTest, AllMissingColumnDroppedWithWarning) {
  FeatureTable t(3);
  t.AddNumeric("gone", {std::nan(""), std::nan(""), std::nan("")});
  t.AddNumeric("kept", {1, 2, 3});
  const auto enc = EncodeFeatures(t, {0, 1, 2});
  EXPECT_EQ(enc.values.cols(), 1);
  ASSERT_EQ(enc.state.warnings.size(), 1u);
}

TEST(EncoderTest, ReplayIsIdentical) {
  FeatureTable t(5);
  t.AddNumeric("a", {1.5, -2, 3, std::nan(""), 0});
  t.AddCategorical("c", {"x", "y", "", "x", "z"});
  t.AddText("t", {"a b", "b c", "", "c c a", "d"});
  EncoderOptions options;
  options.text_buckets = 16;
  const auto enc = EncodeFeatures(t, {0, 1, 2, 4}, options);
  EXPECT_EQ(enc.state.Apply(t), enc.values);
  EXPECT_EQ(enc.state.OutputNames().size(), static_cast<std::size_t>(enc.values.cols()));
}

TEST(EncoderTest, EmptyFitRowsRejected) {
  FeatureTable t(2);
  t.AddNumeric("a", {1, 2});
  EXPECT_THROW(EncodeFeatures(t, {}), Error);
}

TEST(ModelsTest, RidgeExactLeastSquares) {
  Matrix x(3, 1);
  x << 1, 2, 3;
  const auto model = Train(MakeSpec(ModelFamily::kRidgeLinear, "r", {{"l2", 0.0}}), x,
                           RegressionTargets({2, 4, 6}));
  Matrix q(1, 1);
  q << 4;
  EXPECT_NEAR(model->PredictMatrix(q)(0, 0), 8.0, 1e-9);
}

TEST(ModelsTest, RidgeOnWideDataMatchesPrimalSolve) {
  // More columns than rows; no standardization or intercept so the primal
  // normal equations give the coefficients directly.
  const Matrix x = testing::RandomMatrix(6, 15, 4);
  const Matrix y = testing::RandomMatrix(6, 1, 5);
  const double l2 = 0.3;
  const auto model = Train(MakeSpec(ModelFamily::kRidgeLinear, "r",
                                    {{"l2", l2}, {"standardize", 0}, {"fit_intercept", 0}}),
                           x, RegressionTargets(std::vector<double>(y.data(), y.data() + 6)));
  Matrix gram = x.transpose() * x;
  gram.diagonal().array() += l2;
  const Vector coef = gram.ldlt().solve(x.transpose() * y);
  const Matrix query = testing::RandomMatrix(4, 15, 6);
  const Matrix expected = query * coef;
  EXPECT_LT((model->PredictMatrix(query) - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ModelsTest, OneNeighborReturnsOwnLabel) {
  const Matrix x = testing::RandomMatrix(30, 4, 2);
  std::vector<double> y(30);
  for (int i = 0; i < 30; ++i) y[i] = i * 0.5;
  const auto model = Train(MakeSpec(ModelFamily::kKnn, "k", {{"neighbors", 1}}), x, RegressionTargets(y));
  const Matrix p = model->PredictMatrix(x);
  for (int i = 0; i < 30; ++i) EXPECT_EQ(p(i, 0), y[i]);
}

// Boosting with an exhaustive stump search on one feature: squared loss,
// leaf value learning_rate * mean residual.
std::vector<double> StumpBoostOracle(const std::vector<double>& x, const std::vector<double>& y,
                                     int rounds, double lr) {
  const std::size_t n = x.size();
  std::vector<double> f(n, std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n));
  std::vector<double> cuts(x);
  std::sort(cuts.begin(), cuts.end());
  for (int round = 0; round < rounds; ++round) {
    double best_sse = std::numeric_limits<double>::infinity();
    double best_cut = 0.0, best_left = 0.0, best_right = 0.0;
    for (std::size_t c = 0; c + 1 < n; ++c) {
      const double cut = 0.5 * (cuts[c] + cuts[c + 1]);
      double sl = 0, sr = 0;
      int nl = 0, nr = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f[i];
        if (x[i] <= cut) { sl += r; ++nl; } else { sr += r; ++nr; }
      }
      const double ml = sl / nl, mr = sr / nr;
      double sse = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f[i] - (x[i] <= cut ? ml : mr);
        sse += r * r;
      }
      if (sse < best_sse) {
        best_sse = sse;
        best_cut = cut;
        best_left = ml;
        best_right = mr;
      }
    }
    for (std::size_t i = 0; i < n; ++i) f[i] += lr * (x[i] <= best_cut ? best_left : best_right);
  }
  return f;
}

TEST(ModelsTest, GbdtStumpsMatchExhaustiveSearch) {
  Rng rng(3);
  std::vector<double> xs, ys;
  for (int i = 0; i < 100; ++i) {
    const double v = rng.Uniform(-1, 1);
    xs.push_back(v);
    ys.push_back(v > 0 ? 1.0 : -1.0);
  }
  Matrix x(100, 1);
  for (int i = 0; i < 100; ++i) x(i, 0) = xs[i];
  const auto model = Train(MakeSpec(ModelFamily::kGbdt, "g",
                                    {{"trees", 100}, {"depth", 1}, {"learning_rate", 0.1},
                                     {"min_leaf", 1}, {"l2_leaf", 0}, {"max_bins", 256}}),
                           x, RegressionTargets(ys));
  const Matrix p = model->PredictMatrix(x);
  const auto oracle = StumpBoostOracle(xs, ys, 100, 0.1);
  int correct = 0;
  for (int i = 0; i < 100; ++i) {
    EXPECT_NEAR(p(i, 0), oracle[i], 1e-9);
    correct += (p(i, 0) > 0) == (ys[i] > 0);
  }
  EXPECT_GE(correct, 99);
}

TEST(ModelsTest, GbdtTrainingLossNonIncreasing) {
  Matrix x;
  Targets y;
  Blobs(150, 5, x, y);
  for (const Targets& target : {y, RegressionTargets(std::vector<double>(y.values.begin(), y.values.end()))}) {
    const auto model = Train(MakeSpec(ModelFamily::kGbdt, "g", {{"trees", 40}}), x, target);
    const auto loss = model->TrainingLoss();
    ASSERT_EQ(loss.size(), 40u);
    for (std::size_t i = 1; i < loss.size(); ++i) EXPECT_LE(loss[i], loss[i - 1] + 1e-12);
  }
}

class FamilyTest : public ::testing::TestWithParam<ModelFamily> {};

TEST_P(FamilyTest, ClassificationRowsAreDistributions) {
  Matrix x;
  Targets y;
  Blobs(90, 7, x, y);
  const auto model = Train(MakeSpec(GetParam(), "m", {}), x, y);
  const Matrix p = model->PredictMatrix(testing::RandomMatrix(40, 3, 8));
  ASSERT_EQ(p.cols(), 3);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-6);
    EXPECT_GE(p.row(i).minCoeff(), 0.0);
  }
}

TEST_P(FamilyTest, SeedDeterminismAndSerializationRoundTrip) {
  Matrix x;
  Targets y;
  Blobs(60, 9, x, y);
  ModelSpec spec = MakeSpec(GetParam(), "m", {});
  if (GetParam() == ModelFamily::kGbdt) spec.hyperparameters["trees"] = 20;
  if (GetParam() == ModelFamily::kMlp) spec.hyperparameters["epochs"] = 30;
  spec.seed = 42;
  const auto a = Train(spec, x, y);
  const auto b = Train(spec, x, y);
  const Matrix q = testing::RandomMatrix(25, 3, 10);
  EXPECT_EQ(a->PredictMatrix(q), b->PredictMatrix(q));
  const auto bytes = SerializeModel(*a);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "BSTW");
  const auto restored = DeserializeModel(bytes);
  EXPECT_EQ(restored->family(), GetParam());
  EXPECT_EQ(restored->PredictMatrix(q), a->PredictMatrix(q));
  EXPECT_EQ(SerializeModel(*restored), bytes);
}

INSTANTIATE_TEST_SUITE_P(Families, FamilyTest,
                         ::testing::Values(ModelFamily::kConstant, ModelFamily::kLogisticLinear,
                                           ModelFamily::kKnn, ModelFamily::kGbdt, ModelFamily::kMlp),
                         [](const auto& info) { return ModelFamilyName(info.param); });

TEST(ModelsTest, RegressionRoundTripForRidge) {
  const Matrix x = testing::RandomMatrix(20, 3, 1);
  const auto a = Train(MakeSpec(ModelFamily::kRidgeLinear), x, RegressionTargets(std::vector<double>(x.col(0).data(), x.col(0).data() + 20)));
  const auto restored = DeserializeModel(SerializeModel(*a));
  EXPECT_EQ(restored->PredictMatrix(x), a->PredictMatrix(x));
}

TEST(ModelsTest, CorruptBlobRejected) {
  const Matrix x = testing::RandomMatrix(10, 2, 1);
  auto bytes = SerializeModel(*Train(MakeSpec(ModelFamily::kRidgeLinear), x, RegressionTargets(std::vector<double>(10, 1.0))));
  bytes[0] = 'X';
  EXPECT_THROW(DeserializeModel(bytes), Error);
  bytes[0] = 'B';
  bytes.resize(bytes.size() / 2);
  EXPECT_THROW(DeserializeModel(bytes), Error);
}

TEST(ModelsTest, SingleClassYieldsConstantWithWarning) {
  const Matrix x = testing::RandomMatrix(10, 2, 1);
  const auto model = Train(MakeSpec(ModelFamily::kGbdt), x, ClassTargets(std::vector<double>(10, 1.0), 3));
  EXPECT_FALSE(model->warnings().empty());
  const Matrix p = model->PredictMatrix(x);
  for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_EQ(ArgMax(p.row(i)), 1);
}

TEST(ModelsTest, HyperparameterValidation) {
  EXPECT_THROW(MakeSpec(ModelFamily::kKnn, "", {{"neighbors", 0}}).Validate(Task::kRegression), Error);
  EXPECT_THROW(MakeSpec(ModelFamily::kGbdt, "", {{"trees", 0}}).Validate(Task::kRegression), Error);
  EXPECT_THROW(MakeSpec(ModelFamily::kGbdt, "", {{"learning_rate", 1.5}}).Validate(Task::kRegression), Error);
  EXPECT_THROW(MakeSpec(ModelFamily::kMlp, "", {{"hidden", 0}}).Validate(Task::kRegression), Error);
  EXPECT_THROW(MakeSpec(ModelFamily::kMlp, "", {{"dropout", 0.5}}).Validate(Task::kRegression), Error);
  EXPECT_THROW(MakeSpec(ModelFamily::kRidgeLinear).Validate(Task::kClassification), Error);
  EXPECT_NO_THROW(MakeSpec(ModelFamily::kGbdt, "", {{"learning_rate", 1.0}}).Validate(Task::kRegression));
}

TEST(ModelsTest, ShapeMismatchRejected) {
  const Matrix x = testing::RandomMatrix(10, 2, 1);
  EXPECT_THROW(Train(MakeSpec(ModelFamily::kRidgeLinear), x, RegressionTargets({1, 2})), Error);
  const auto model = Train(MakeSpec(ModelFamily::kRidgeLinear), x, RegressionTargets(std::vector<double>(10, 0.5)));
  EXPECT_THROW(model->PredictMatrix(testing::RandomMatrix(3, 5, 2)), Error);
}

TEST(RosterTest, Defaults) {
  const auto layer0 = ListLayerModels(0, Task::kRegression);
  auto has = [](const std::vector<ModelSpec>& r, ModelFamily f) {
    return std::any_of(r.begin(), r.end(), [f](const ModelSpec& s) { return s.family == f; });
  };
  EXPECT_TRUE(has(layer0, ModelFamily::kGbdt));
  EXPECT_TRUE(has(layer0, ModelFamily::kRidgeLinear));
  for (Task task : {Task::kRegression, Task::kClassification}) {
    const auto a = ListLayerModels(0, task);
    const auto b = ListLayerModels(1, task);
    for (const auto& spec : a) EXPECT_TRUE(has(b, spec.family));
    EXPECT_TRUE(has(b, ModelFamily::kKnn));
  }
}

TEST(RosterTest, OverrideReturnedVerbatim) {
  RosterConfig config;
  std::vector<ModelSpec> custom{MakeSpec(ModelFamily::kKnn, "near", {{"neighbors", 3}})};
  config.SetOverride(1, custom);
  const auto got = ListLayerModels(1, Task::kRegression, config);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].tag, "near");
  EXPECT_EQ(got[0].hyperparameters, custom[0].hyperparameters);
  EXPECT_EQ(ListLayerModels(0, Task::kRegression, config).size(), 3u);
}

}  // namespace
}  // namespace stackprop
