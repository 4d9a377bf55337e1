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

#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "stackprop/error.hpp"
#include "stackprop/leakage_lab.hpp"
#include "stackprop/models.hpp"
#include "test_util.hpp"

namespace stackprop {
namespace {

// alpha I + beta (I - D^{-1/2} A D^{-1/2}), isolated nodes contributing nothing.
Matrix DensePrecision(const Graph& graph, double alpha, double beta) {
  const Matrix a = testing::DenseAdjacency(graph);
  const auto n = a.rows();
  Matrix lap = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double di = a.row(i).sum();
    if (di == 0.0) continue;
    lap(i, i) = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dj = a.row(j).sum();
      if (a(i, j) != 0.0) lap(i, j) = -1.0 / std::sqrt(di * dj);
    }
  }
  return alpha * Matrix::Identity(n, n) + beta * lap;
}

TEST(GmrfTest, ZeroCouplingIsIndependent) {
  const GmrfModel model(testing::RandomGraph(8, 0.4, 1), 2.0, 0.0);
  EXPECT_LT((model.Covariance() - 0.5 * Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GmrfTest, PathCovarianceMatchesDenseInverse) {
  const Graph path = testing::PathGraph(5);
  const GmrfModel model(path, 1.0, 2.0);
  const Matrix expected = DensePrecision(path, 1.0, 2.0).inverse();
  EXPECT_LT((model.Covariance() - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((model.factor() * model.factor().transpose() - model.precision()).cwiseAbs().maxCoeff(),
            1e-12);
}

TEST(GmrfTest, SingleNode) {
  const GmrfModel model(Graph::FromEdges(1, {}), 4.0, 3.0);
  EXPECT_DOUBLE_EQ(model.Covariance()(0, 0), 0.25);
}

TEST(GmrfTest, SampleCovarianceConverges) {
  const Graph g = testing::RandomGraph(6, 0.5, 3);
  const GmrfModel model(g, 1.0, 1.0);
  const Matrix draws = SampleGmrf(model, 50000, 4);
  const Matrix centered = draws.rowwise() - draws.colwise().mean();
  const Matrix empirical = centered.transpose() * centered / static_cast<double>(draws.rows() - 1);
  EXPECT_LT(testing::RelativeError(empirical, model.Covariance()), 0.05);
}

TEST(GmrfTest, RejectsBadParameters) {
  const Graph g = testing::PathGraph(3);
  EXPECT_THROW(GmrfModel(g, 0.0, 1.0), Error);
  EXPECT_THROW(GmrfModel(g, 1.0, -1.0), Error);
  EXPECT_THROW(GmrfModel(Graph::FromEdges(0, {}), 1.0, 1.0), Error);
}

TEST(ConditionalTest, ZeroCoupling) {
  const GmrfModel model(testing::PathGraph(4), 2.0, 0.0);
  Vector observed(1);
  observed << 5.0;
  const auto law = ConditionalGaussian(model, {1}, observed);
  EXPECT_EQ(law.free_nodes, (std::vector<NodeId>{0, 2, 3}));
  EXPECT_LT(law.mean.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((law.covariance - 0.5 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ConditionalTest, TwoNodeHandCase) {
  // Precision [[2, -1], [-1, 2]]: x0 | x1 = 3 is N(1.5, 0.5).
  const GmrfModel model(testing::PathGraph(2), 1.0, 1.0);
  Vector observed(1);
  observed << 3.0;
  const auto law = ConditionalGaussian(model, {1}, observed);
  EXPECT_NEAR(law.mean(0), 1.5, 1e-14);
  EXPECT_NEAR(law.covariance(0, 0), 0.5, 1e-14);
}

TEST(ConditionalTest, AgreesWithCovarianceSchurComplement) {
  const Graph g = testing::RandomGraph(7, 0.5, 5);
  const GmrfModel model(g, 0.7, 1.5);
  const std::vector<NodeId> observed{1, 4, 6};
  const std::vector<NodeId> free{0, 2, 3, 5};
  Vector values(3);
  values << 0.3, -1.2, 0.8;
  const Matrix sigma = model.Covariance();
  Matrix s_ff(4, 4), s_fo(4, 3), s_oo(3, 3);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) s_ff(i, j) = sigma(free[i], free[j]);
    for (int j = 0; j < 3; ++j) s_fo(i, j) = sigma(free[i], observed[j]);
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) s_oo(i, j) = sigma(observed[i], observed[j]);
  }
  const Matrix gain = s_fo * s_oo.inverse();
  const auto law = ConditionalGaussian(model, observed, values);
  EXPECT_LT((law.mean - gain * values).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((law.covariance - (s_ff - gain * s_fo.transpose())).cwiseAbs().maxCoeff(), 1e-12);

  const Matrix draws = SampleConditional(law, 100000, 6);
  const Vector mean = draws.colwise().mean().transpose();
  EXPECT_LT((mean - law.mean).cwiseAbs().maxCoeff(), 0.02);
  const Matrix centered = draws.rowwise() - mean.transpose();
  const Matrix empirical = centered.transpose() * centered / static_cast<double>(draws.rows() - 1);
  EXPECT_LT(testing::RelativeError(empirical, law.covariance), 0.03);
}

TEST(ConditionalTest, Errors) {
  const GmrfModel model(testing::PathGraph(3), 1.0, 1.0);
  EXPECT_THROW(ConditionalGaussian(model, {}, Vector()), Error);
  EXPECT_THROW(ConditionalGaussian(model, {0, 1, 2}, Vector::Zero(3)), Error);
  EXPECT_THROW(ConditionalGaussian(model, {0, 0}, Vector::Zero(2)), Error);
  EXPECT_THROW(ConditionalGaussian(model, {0}, Vector::Zero(2)), Error);
}

ChunkedDataset RandomChunks(const LeakageInstance& inst, std::uint64_t seed) {
  ChunkedDataset data;
  const auto n = static_cast<Eigen::Index>(inst.graph.num_nodes());
  data.features = testing::RandomMatrix(n, 2, seed);
  Rng rng(seed + 1);
  data.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index v = 0; v < n; ++v) data.labels[v] = data.features.row(v).sum() + rng.Normal();
  data.chunk1 = inst.chunk1;
  data.chunk2 = inst.chunk2;
  return data;
}

// Ridge fitted directly on the chunk's rows.
ModelPtr FitChunk(const ModelSpec& spec, const ChunkedDataset& data, const std::vector<NodeId>& chunk) {
  Matrix x(static_cast<Eigen::Index>(chunk.size()), data.features.cols());
  Targets y;
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = data.features.row(chunk[i]);
    y.values.push_back(data.labels[chunk[i]]);
  }
  return Train(spec, x, y);
}

TEST(FunctionalTest, MatchesLiteralEvaluation) {
  const ModelSpec ridge = MakeSpec(ModelFamily::kRidgeLinear);
  double max_crossing_gap = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto inst = MakeLeakageInstance(12, 0.3, s);
    const auto data = RandomChunks(inst, 100 + s);
    const ModelPtr m1 = FitChunk(ridge, data, inst.chunk1);
    const ModelPtr m2 = FitChunk(ridge, data, inst.chunk2);
    const auto in = [](const std::vector<NodeId>& c, NodeId v) {
      return std::find(c.begin(), c.end(), v) != c.end();
    };
    double bagged = 0.0, unbagged = 0.0, identity = 0.0;
    for (NodeId u : inst.graph.neighbors(inst.x0)) {
      const Matrix row = data.features.row(u);
      identity += row.sum();
      if (in(inst.chunk1, u)) {
        bagged += m2->PredictMatrix(row)(0, 0);
        unbagged += m1->PredictMatrix(row)(0, 0);
      } else {
        bagged += m1->PredictMatrix(row)(0, 0);
        unbagged += m2->PredictMatrix(row)(0, 0);
      }
    }
    const LabModel lab = LabModel::Trained(ridge);
    const auto b = BaggedFunctional(inst.x0, data, inst.graph, lab);
    const auto u = UnbaggedFunctional(inst.x0, data, inst.graph, lab);
    EXPECT_NEAR(b.value, bagged, 1e-12);
    EXPECT_NEAR(u.value, unbagged, 1e-12);
    EXPECT_FALSE(b.no_labeled_neighbors);
    max_crossing_gap = std::max(max_crossing_gap, std::abs(b.value - u.value));
    // With one shared scorer both orderings coincide.
    const auto bi = BaggedFunctional(inst.x0, data, inst.graph, LabModel::Identity());
    EXPECT_DOUBLE_EQ(bi.value, identity);
    EXPECT_DOUBLE_EQ(UnbaggedFunctional(inst.x0, data, inst.graph, LabModel::Identity()).value,
                     bi.value);
  }
  EXPECT_GT(max_crossing_gap, 1e-6);
}

TEST(FunctionalTest, NoLabeledNeighborsIsZero) {
  const Graph g = Graph::FromEdges(5, std::vector<Edge>{{0, 1}, {2, 3}, {3, 4}});
  ChunkedDataset data;
  data.features = Matrix::Ones(5, 1);
  data.labels.assign(5, 1.0);
  data.chunk1 = {2, 3};
  data.chunk2 = {4};
  const auto out = BaggedFunctional(0, data, g, LabModel::Identity());
  EXPECT_TRUE(out.no_labeled_neighbors);
  EXPECT_EQ(out.value, 0.0);
  EXPECT_THROW(BaggedFunctional(2, data, g, LabModel::Identity()), Error);
  data.chunk2 = {3};
  EXPECT_THROW(BaggedFunctional(0, data, g, LabModel::Identity()), Error);
}

// log of the integral of p^a q^(1-a) by the trapezoid rule.
double NumericRenyi(double order, double mp, double vp, double mq, double vq) {
  const double lo = std::min(mp, mq) - 30.0 * std::sqrt(std::max(vp, vq));
  const double hi = std::max(mp, mq) + 30.0 * std::sqrt(std::max(vp, vq));
  const int steps = 400000;
  const double h = (hi - lo) / steps;
  auto log_density = [](double x, double m, double v) {
    return -0.5 * std::log(2.0 * M_PI * v) - (x - m) * (x - m) / (2.0 * v);
  };
  double sum = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double x = lo + h * i;
    const double w = (i == 0 || i == steps) ? 0.5 : 1.0;
    sum += w * std::exp(order * log_density(x, mp, vp) + (1.0 - order) * log_density(x, mq, vq));
  }
  return std::log(sum * h) / (order - 1.0);
}

TEST(RenyiTest, MatchesNumericalIntegration) {
  const double cases[][5] = {{2.0, 0.0, 1.0, 0.0, 1.0},  {2.0, 0.5, 1.0, 0.0, 1.0},
                             {1.5, 0.2, 0.8, -0.3, 1.1}, {3.0, 1.0, 0.5, 0.7, 0.6},
                             {2.0, -0.4, 2.0, 0.1, 1.5}};
  for (const auto& c : cases) {
    EXPECT_NEAR(GaussianRenyiDivergence(c[0], c[1], c[2], c[3], c[4]),
                std::max(0.0, NumericRenyi(c[0], c[1], c[2], c[3], c[4])), 1e-7);
  }
  // Equal variances reduce to a (mean gap)^2 / (2 var).
  EXPECT_NEAR(GaussianRenyiDivergence(2.0, 1.0, 0.5, 0.0, 0.5), 2.0, 1e-14);
  EXPECT_TRUE(std::isinf(GaussianRenyiDivergence(3.0, 0.0, 2.0, 0.0, 0.5)));
  EXPECT_THROW(GaussianRenyiDivergence(1.0, 0, 1, 0, 1), Error);
  EXPECT_THROW(GaussianRenyiDivergence(2.0, 0, 0, 0, 1), Error);
}

LeakageExperimentConfig ConfigFor(const LeakageInstance& inst) {
  LeakageExperimentConfig cfg;
  cfg.x0 = inst.x0;
  cfg.chunk1 = inst.chunk1;
  cfg.chunk2 = inst.chunk2;
  cfg.removed = inst.removed;
  cfg.trials = 2000;
  cfg.seed = 9;
  return cfg;
}

TEST(LeakageExperimentTest, BoundGrowsWithCoupling) {
  const auto inst = MakeLeakageInstance(12, 0.3, 21);
  double previous = 0.0;
  for (double beta : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const GmrfModel model(inst.graph, 1.0, beta);
    auto cfg = ConfigFor(inst);
    cfg.trials = 10;
    const auto report = RunLeakageExperiment(model, cfg);
    EXPECT_GE(report.epsilon_bound, previous - 1e-12);
    previous = report.epsilon_bound;
    if (beta == 0.0) {
      EXPECT_NEAR(report.epsilon_bound, 1.0, 1e-12);
    }
    cfg.bound_variance = BoundVariance::kMaxDiagonal;
    EXPECT_LE(RunLeakageExperiment(model, cfg).epsilon_bound, report.epsilon_bound + 1e-12);
  }
}

TEST(LeakageExperimentTest, ClippedOutputsMoveByAtMostOne) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto inst = MakeLeakageInstance(12, 0.3, s);
    const GmrfModel model(inst.graph, 1.0, 1.0);
    auto cfg = ConfigFor(inst);
    cfg.model = LabModel::Trained(MakeSpec(ModelFamily::kRidgeLinear));
    const auto report = RunLeakageExperiment(model, cfg);
    EXPECT_LE(report.max_output_difference, 1.0);
    for (double v : report.outputs_full) EXPECT_LE(std::abs(v), 0.5);
  }
}

TEST(LeakageExperimentTest, UnclippedIdentityOutputsAreGaussian) {
  const auto inst = MakeLeakageInstance(12, 0.3, 31);
  const GmrfModel model(inst.graph, 1.0, 1.0);
  auto cfg = ConfigFor(inst);
  cfg.clip.reset();
  cfg.trials = 20000;
  const auto report = RunLeakageExperiment(model, cfg);
  double m3 = 0.0, m4 = 0.0;
  for (double v : report.outputs_full) {
    const double z = (v - report.mean_full) / std::sqrt(report.var_full);
    m3 += z * z * z;
    m4 += z * z * z * z;
  }
  m3 /= static_cast<double>(cfg.trials);
  m4 /= static_cast<double>(cfg.trials);
  EXPECT_LT(std::abs(m3), 0.1);
  EXPECT_LT(std::abs(m4 - 3.0), 0.2);

  // Variance of the summed chunk-2 neighbors under the conditional law.
  std::vector<NodeId> observed;
  for (NodeId v = 0; v < 12; ++v) {
    if (std::find(inst.chunk2.begin(), inst.chunk2.end(), v) == inst.chunk2.end()) observed.push_back(v);
  }
  const auto law = ConditionalGaussian(model, observed, Vector::Zero(static_cast<Eigen::Index>(observed.size())));
  Vector pick = Vector::Zero(law.mean.size());
  for (NodeId u : inst.graph.neighbors(inst.x0)) {
    const auto at = std::find(law.free_nodes.begin(), law.free_nodes.end(), u);
    if (at != law.free_nodes.end()) pick(at - law.free_nodes.begin()) = 1.0;
  }
  const double expected_var = pick.dot(law.covariance * pick);
  EXPECT_NEAR(report.var_full / expected_var, 1.0, 0.05);
  EXPECT_NEAR(report.var_reduced / expected_var, 1.0, 0.05);
  EXPECT_GT(report.unbagged_gap, 1e-6);
}

TEST(LeakageExperimentTest, RemovingADistantRecordLeaksNothing) {
  const auto inst = MakeLeakageInstance(12, 0.3, 41);
  auto cfg = ConfigFor(inst);
  const auto nbrs = inst.graph.neighbors(inst.x0);
  NodeId distant = inst.removed;
  for (NodeId v : inst.chunk1) {
    if (std::find(nbrs.begin(), nbrs.end(), v) == nbrs.end()) distant = v;
  }
  ASSERT_NE(distant, inst.removed);
  cfg.removed = distant;
  const GmrfModel model(inst.graph, 1.0, 0.0);
  const auto report = RunLeakageExperiment(model, cfg);
  EXPECT_EQ(report.max_output_difference, 0.0);
  EXPECT_EQ(report.epsilon_hat, 0.0);
  EXPECT_EQ(report.unbagged_gap, 0.0);
}

TEST(LeakageExperimentTest, DeterministicAcrossWorkers) {
  const auto inst = MakeLeakageInstance(12, 0.3, 51);
  const GmrfModel model(inst.graph, 1.0, 1.0);
  auto cfg = ConfigFor(inst);
  cfg.model = LabModel::Trained(MakeSpec(ModelFamily::kRidgeLinear));
  const auto a = RunLeakageExperiment(model, cfg);
  cfg.workers = 3;
  const auto b = RunLeakageExperiment(model, cfg);
  EXPECT_EQ(a.outputs_full, b.outputs_full);
  EXPECT_EQ(a.outputs_reduced, b.outputs_reduced);
  EXPECT_EQ(a.epsilon_hat, b.epsilon_hat);
}

TEST(LeakageExperimentTest, InstancesSatisfyTheirContract) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto inst = MakeLeakageInstance(10, 0.3, s);
    const auto nbrs = inst.graph.neighbors(inst.x0);
    EXPECT_NE(std::find(nbrs.begin(), nbrs.end(), inst.removed), nbrs.end());
    EXPECT_NE(std::find(inst.chunk1.begin(), inst.chunk1.end(), inst.removed), inst.chunk1.end());
    EXPECT_EQ(inst.chunk1.size() + inst.chunk2.size(), 9u);
  }
  EXPECT_THROW(MakeLeakageInstance(4, 0.3, 0), Error);
  EXPECT_THROW(MakeLeakageInstance(10, 0.0, 0), Error);
}

TEST(LeakageExperimentTest, ConfigErrors) {
  const auto inst = MakeLeakageInstance(12, 0.3, 61);
  const GmrfModel model(inst.graph, 1.0, 1.0);
  auto cfg = ConfigFor(inst);
  cfg.removed = inst.chunk2[0];
  EXPECT_THROW(RunLeakageExperiment(model, cfg), Error);
  cfg = ConfigFor(inst);
  cfg.order_a = 1.0;
  EXPECT_THROW(RunLeakageExperiment(model, cfg), Error);
  cfg = ConfigFor(inst);
  cfg.x0 = inst.chunk1[0];
  EXPECT_THROW(RunLeakageExperiment(model, cfg), Error);
}

}  // namespace
}  // namespace stackprop
