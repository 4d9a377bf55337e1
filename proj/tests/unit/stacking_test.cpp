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

#include <numeric>
#include <set>

#include <Eigen/LU>

#include "stackprop/error.hpp"
#include "stackprop/features.hpp"
#include "stackprop/io.hpp"
#include "stackprop/metrics.hpp"
#include "stackprop/stacking.hpp"
#include "stackprop/synth.hpp"
#include "test_util.hpp"

namespace stackprop {
namespace {

// Small regression problem on a random graph: y = smoothed signal + noise.
struct Problem {
  Graph graph;
  Matrix features;
  LabelTable labels;  // training labels only
  LabelTable truth;   // every node labeled
  std::vector<NodeId> held_out;
};

Problem MakeProblem(std::size_t n, std::uint64_t seed, double train_fraction = 0.6) {
  Problem p;
  p.graph = testing::RandomGraph(n, 6.0 / static_cast<double>(n), seed);
  const auto op = BuildKernel(p.graph, {});
  const Matrix signal = SmoothToDepth(testing::RandomMatrix(static_cast<Eigen::Index>(n), 1, seed + 1), op, 0.9, 10);
  p.features = testing::RandomMatrix(static_cast<Eigen::Index>(n), 2, seed + 2);
  p.features.col(0) += 3.0 * signal;
  std::vector<double> y(n);
  std::vector<bool> mask(n);
  Rng rng(seed + 3);
  for (std::size_t v = 0; v < n; ++v) {
    y[v] = 3.0 * signal(static_cast<Eigen::Index>(v), 0) + 0.1 * rng.Normal();
    mask[v] = rng.Uniform01() < train_fraction;
    if (!mask[v]) p.held_out.push_back(static_cast<NodeId>(v));
  }
  p.labels = testing::RegressionLabels(y, mask);
  p.truth = testing::RegressionLabels(y, std::vector<bool>(n, true));
  return p;
}

StackConfig BaseConfig(std::size_t layers, std::size_t steps) {
  StackConfig cfg;
  cfg.num_layers = layers;
  cfg.num_folds = 3;
  cfg.propagation.num_steps = steps;
  cfg.propagation.lambda = 0.8;
  cfg.seed = 5;
  return cfg;
}

std::vector<ModelSpec> Ridge() { return {MakeSpec(ModelFamily::kRidgeLinear)}; }

TEST(StackingTest, SingleBlockAddsOneColumn) {
  const Problem p = MakeProblem(60, 1);
  const StackConfig cfg = BaseConfig(2, 0);
  const LayerState state = RunLayer(0, p.features, Ridge(), p.graph, p.labels, cfg, false);
  EXPECT_EQ(NextLayerInput(state, cfg).cols(), p.features.cols() + 1);
}

TEST(StackingTest, ColumnBookkeepingForClasses) {
  const std::size_t n = 90;
  const Graph g = testing::RandomGraph(n, 0.05, 2);
  const Matrix x = testing::RandomMatrix(static_cast<Eigen::Index>(n), 5, 3);
  std::vector<double> y(n);
  std::vector<bool> mask(n);
  for (std::size_t v = 0; v < n; ++v) {
    y[v] = static_cast<double>(v % 4);
    mask[v] = v % 5 != 0;
  }
  const auto labels = testing::ClassLabels(y, mask, 4);
  StackConfig cfg = BaseConfig(3, 3);
  cfg.step_subset = {0, 1, 2};
  const std::vector<ModelSpec> roster{MakeSpec(ModelFamily::kLogisticLinear, "", {{"epochs", 5}}),
                                      MakeSpec(ModelFamily::kKnn),
                                      MakeSpec(ModelFamily::kConstant)};
  const LayerState first = RunLayer(0, x, roster, g, labels, cfg, false);
  const Matrix next = NextLayerInput(first, cfg);
  EXPECT_EQ(next.cols(), 5 + 36);
  const LayerState second = RunLayer(1, next, roster, g, labels, cfg, false);
  EXPECT_EQ(NextLayerInput(second, cfg).cols(), 5 + 2 * 36);

  cfg.include_raw_features = false;
  EXPECT_EQ(NextLayerInput(first, cfg).cols(), 36);
  const LayerState second_no_raw = RunLayer(1, NextLayerInput(first, cfg), roster, g, labels, cfg, false);
  EXPECT_EQ(NextLayerInput(second_no_raw, cfg).cols(), 72);
}

TEST(StackingTest, StepsDefaultToFullRange) {
  StackConfig cfg = BaseConfig(2, 3);
  EXPECT_EQ(cfg.Steps(), (std::vector<std::size_t>{0, 1, 2, 3}));
  cfg.step_subset = {1, 3};
  EXPECT_EQ(cfg.Steps(), (std::vector<std::size_t>{1, 3}));
  cfg.step_subset = {3, 1};
  EXPECT_THROW(cfg.Validate(), Error);
  cfg.step_subset = {4};
  EXPECT_THROW(cfg.Validate(), Error);
}

TEST(StackingTest, TwoClusterFixedPoint) {
  // Two 5-cliques joined by a single bridge edge.
  std::vector<Edge> edges{{4, 5}};
  for (NodeId c : {0u, 5u}) {
    for (NodeId u = c; u < c + 5; ++u) {
      for (NodeId v = u + 1; v < c + 5; ++v) edges.emplace_back(u, v);
    }
  }
  const Graph g = Graph::FromEdges(10, edges);
  Matrix x(10, 1);
  for (int v = 0; v < 10; ++v) x(v, 0) = v < 5 ? 1.0 + 0.1 * v : -1.0 - 0.1 * v;
  std::vector<bool> mask(10, true);
  mask[2] = mask[7] = false;
  std::vector<double> y(10);
  for (int v = 0; v < 10; ++v) y[v] = x(v, 0);
  StackConfig cfg = BaseConfig(2, 2000);
  cfg.num_folds = 2;
  cfg.propagation.lambda = 0.99;
  cfg.propagation.max_steps = 2000;
  cfg.step_subset = {2000};
  const auto state = RunLayer(0, x, Ridge(), g, testing::RegressionLabels(y, mask), cfg, false);
  const Matrix& base = state.models[0].base;
  const Matrix s = BuildKernel(g, cfg.propagation.kernel).ToDense();
  const Matrix fixed = (Matrix::Identity(10, 10) - 0.99 * s).lu().solve(0.01 * base);
  const Matrix& block = state.models[0].blocks[0];
  EXPECT_LT((block - fixed).cwiseAbs().maxCoeff(), 1e-8);
  // Smoothing shrinks the spread inside each clique.
  for (Eigen::Index start : {0, 5}) {
    const auto spread = [](const Matrix& m) { return m.maxCoeff() - m.minCoeff(); };
    EXPECT_LT(spread(block.middleRows(start, 5)), spread(base.middleRows(start, 5)));
  }
  EXPECT_GT(block(2, 0), block(7, 0));
}

TEST(StackingTest, SingleLayerNoGraphIsPlainBagging) {
  const Problem p = MakeProblem(80, 7);
  StackConfig cfg = BaseConfig(1, 0);
  const FinalPredictor pred = RunPipeline(p.graph, p.features, p.labels, cfg, {Ridge()});
  const auto labeled = p.labels.LabeledNodes();
  const auto unlabeled = p.labels.UnlabeledNodes();
  const FoldPlan plan = MakeFoldPlan(labeled, 3, 1, CombineSeed(cfg.seed, 0));
  const OOFMatrix bagged = RunBaggedTraining(plan, p.features, p.labels, Ridge()[0], unlabeled);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    EXPECT_EQ(pred.output.values(labeled[i], 0), bagged.oof(static_cast<Eigen::Index>(i), 0));
  }
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    EXPECT_EQ(pred.output.values(unlabeled[i], 0), bagged.unlabeled(static_cast<Eigen::Index>(i), 0));
  }
}

TEST(StackingTest, DeterministicAcrossRunsAndWorkers) {
  const Problem p = MakeProblem(120, 9);
  StackConfig cfg = BaseConfig(2, 3);
  const std::vector<std::vector<ModelSpec>> rosters{
      {MakeSpec(ModelFamily::kRidgeLinear), MakeSpec(ModelFamily::kGbdt, "", {{"trees", 15}})},
      {MakeSpec(ModelFamily::kRidgeLinear), MakeSpec(ModelFamily::kMlp, "", {{"epochs", 20}})}};
  const auto a = RunPipeline(p.graph, p.features, p.labels, cfg, rosters);
  const auto b = RunPipeline(p.graph, p.features, p.labels, cfg, rosters);
  cfg.workers = 3;
  const auto c = RunPipeline(p.graph, p.features, p.labels, cfg, rosters);
  EXPECT_EQ(a.output.values, b.output.values);
  EXPECT_EQ(a.output.values, c.output.values);
  EXPECT_EQ(a.weights.weights, c.weights.weights);
  // Replaying the stored copies reproduces the training output exactly.
  EXPECT_EQ(a.Predict(p.graph, p.features).values, a.output.values);
}

// Predicts 1 for rows whose first feature names a training node, else 0.
class MemorizingModel : public TrainedModel {
 public:
  explicit MemorizingModel(std::span<const NodeId> ids) : seen_(ids.begin(), ids.end()) {
    SetHeader(Task::kRegression, 0, 0, "memo");
  }
  ModelFamily family() const override { return ModelFamily::kConstant; }
  Matrix PredictMatrix(const Matrix& x) const override {
    Matrix out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, 0) = seen_.count(static_cast<NodeId>(x(i, 0))) ? 1.0 : 0.0;
    return out;
  }
  void WriteParameters(BlobWriter&) const override {}

 private:
  std::set<NodeId> seen_;
};

TEST(StackingTest, StackerInputsAreLeakFreeAtEveryLayer) {
  const std::size_t n = 100;
  Problem p = MakeProblem(n, 11);
  for (std::size_t v = 0; v < n; ++v) p.features(static_cast<Eigen::Index>(v), 0) = static_cast<double>(v);
  StackConfig cfg = BaseConfig(3, 0);
  cfg.num_repeats = 2;
  cfg.trainer = [](const ModelSpec&, const Matrix&, const Targets&, std::span<const NodeId> ids) -> ModelPtr {
    return std::make_shared<MemorizingModel>(ids);
  };
  const std::vector<ModelSpec> roster{MakeSpec(ModelFamily::kConstant, "memo")};
  const auto pred = RunPipeline(p.graph, p.features, p.labels, cfg, {roster, roster, roster});
  const auto labeled = p.labels.LabeledNodes();
  for (const auto& state : pred.states) {
    for (const auto& m : state.models) {
      for (NodeId v : labeled) EXPECT_EQ(m.base(v, 0), 0.0);
      for (std::size_t i = 0; i < labeled.size(); ++i) {
        for (std::size_t r = 0; r < 2; ++r) {
          const auto& ids = m.bagged.copy(r, m.bagged.provenance[i][r], 3).training_ids;
          EXPECT_EQ(std::count(ids.begin(), ids.end(), labeled[i]), 0);
        }
      }
    }
  }
  cfg.bagging = false;
  const auto leaky = RunPipeline(p.graph, p.features, p.labels, cfg, {roster, roster, roster});
  for (NodeId v : labeled) EXPECT_EQ(leaky.states[0].models[0].base(v, 0), 1.0);
}

TEST(StackingTest, UnlabeledNodesShapeLabeledFeatures) {
  const Problem p = MakeProblem(120, 13);
  StackConfig cfg = BaseConfig(2, 3);
  const auto state = RunLayer(0, p.features, Ridge(), p.graph, p.labels, cfg, false);
  const auto& model = state.models[0];
  const auto labeled = p.labels.LabeledNodes();
  const Graph sub = p.graph.InducedSubgraph(labeled);
  Matrix sub_base(static_cast<Eigen::Index>(labeled.size()), 1);
  for (std::size_t i = 0; i < labeled.size(); ++i) sub_base.row(static_cast<Eigen::Index>(i)) = model.base.row(labeled[i]);
  PredictionFrame frame;
  frame.values = sub_base;
  const auto restricted = Propagate(frame, BuildKernel(sub, cfg.propagation.kernel), cfg.propagation);
  double max_gap = 0.0;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    max_gap = std::max(max_gap, std::abs(restricted[3].values(static_cast<Eigen::Index>(i), 0) -
                                         model.blocks[3](labeled[i], 0)));
  }
  EXPECT_GT(max_gap, 1e-6);
  PredictionFrame full;
  full.values = model.base;
  EXPECT_EQ(Propagate(full, BuildKernel(p.graph, cfg.propagation.kernel), cfg.propagation)[3].values,
            model.blocks[3]);
}

TEST(StackingTest, SecondLayerHelpsOnSmoothLabels) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthSpec spec;
    spec.task = Task::kRegression;
    spec.num_nodes = 400;
    spec.seed = seed;
    const Dataset data = Synthesize(spec);
    std::vector<std::size_t> rows(data.num_nodes());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const Matrix x = EncodeFeatures(data.features, rows).values;
    const LabelTable train = data.TrainingLabels();
    std::vector<NodeId> valid;
    for (NodeId v : data.NodesWithRoles({Role::kValid})) valid.push_back(v);
    StackConfig cfg = BaseConfig(1, 4);
    cfg.seed = seed;
    const std::vector<ModelSpec> roster{MakeSpec(ModelFamily::kRidgeLinear),
                                        MakeSpec(ModelFamily::kGbdt, "", {{"trees", 30}})};
    const auto one = RunPipeline(data.graph, x, train, cfg, {roster});
    cfg.num_layers = 2;
    const auto two = RunPipeline(data.graph, x, train, cfg, {roster, roster});
    const double l1 = EvaluateMetric(one.output.values, data.labels, valid, Metric::kMse);
    const double l2 = EvaluateMetric(two.output.values, data.labels, valid, Metric::kMse);
    wins += l2 <= l1;
  }
  EXPECT_EQ(wins, 5);
}

TEST(StackingTest, ValidationSelectionUsesHeldOutNodes) {
  const Problem p = MakeProblem(100, 15);
  SelectionSplit split;
  split.nodes = p.held_out;
  split.targets = p.truth.TargetsFor(split.nodes);
  StackConfig cfg = BaseConfig(2, 2);
  cfg.selection_set = SelectionSet::kValidation;
  const std::vector<ModelSpec> roster{MakeSpec(ModelFamily::kRidgeLinear), MakeSpec(ModelFamily::kKnn)};
  const auto pred = RunPipeline(p.graph, p.features, p.labels, cfg, {roster, roster}, split);
  double sum = 0.0;
  for (const auto& [tag, w] : pred.weights.weights) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_THROW(RunPipeline(p.graph, p.features, p.labels, cfg, {roster, roster}), Error);
  SelectionSplit labeled_split;
  labeled_split.nodes = {p.labels.LabeledNodes()[0]};
  labeled_split.targets = p.truth.TargetsFor(labeled_split.nodes);
  EXPECT_THROW(RunPipeline(p.graph, p.features, p.labels, cfg, {roster, roster}, labeled_split), Error);
}

TEST(StackingTest, AblationCellsMatchFullPipelineRuns) {
  const Problem p = MakeProblem(90, 17);
  StackConfig cfg = BaseConfig(2, 0);
  const std::vector<std::vector<ModelSpec>> rosters{
      {MakeSpec(ModelFamily::kRidgeLinear), MakeSpec(ModelFamily::kKnn)}, Ridge()};
  const std::vector<std::uint64_t> seeds{3, 4};
  const auto rows = RunAblation(p.graph, p.features, p.labels, cfg, rosters, {0, 2}, {true, false},
                                seeds, p.truth, p.held_out, Metric::kMse);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& row : rows) {
    ASSERT_EQ(row.values.size(), 2u);
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      StackConfig run = cfg;
      run.seed = seeds[s];
      run.bagging = row.bagging;
      run.propagation.num_steps = row.steps;
      const auto pred = RunPipeline(p.graph, p.features, p.labels, run, rosters);
      EXPECT_EQ(row.values[s], EvaluateMetric(pred.output.values, p.truth, p.held_out, Metric::kMse));
    }
  }
  EXPECT_THROW(RunAblation(p.graph, p.features, p.labels, BaseConfig(1, 0), {Ridge()}, {0}, {true},
                           seeds, p.truth, p.held_out, Metric::kMse),
               Error);
}

TEST(StackingTest, ConfigurationErrors) {
  const Problem p = MakeProblem(40, 19);
  StackConfig cfg = BaseConfig(2, 1);
  auto kind_of = [&](const StackConfig& c, const std::vector<std::vector<ModelSpec>>& r) {
    try {
      RunPipeline(p.graph, p.features, p.labels, c, r);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIo;
  };
  EXPECT_EQ(kind_of(cfg, {Ridge()}), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(cfg, {Ridge(), {}}), ErrorKind::kConfig);
  EXPECT_EQ(kind_of(cfg, {{MakeSpec(ModelFamily::kKnn), MakeSpec(ModelFamily::kKnn)}, Ridge()}),
            ErrorKind::kConfig);
  StackConfig small = cfg;
  small.max_model_fits = 5;
  EXPECT_EQ(kind_of(small, {Ridge(), Ridge()}), ErrorKind::kConfig);
  StackConfig log_loss = cfg;
  log_loss.selection_loss = SelectionLoss::kLogLoss;
  EXPECT_EQ(kind_of(log_loss, {Ridge(), Ridge()}), ErrorKind::kConfig);
  StackConfig failing = cfg;
  failing.trainer = [](const ModelSpec&, const Matrix&, const Targets&, std::span<const NodeId>) -> ModelPtr {
    throw std::runtime_error("no");
  };
  try {
    RunPipeline(p.graph, p.features, p.labels, failing, {Ridge(), Ridge()});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kPipeline);
    EXPECT_EQ(std::string(e.what()).find("pipeline error: layer 0"), 0u) << e.what();
  }
}

}  // namespace
}  // namespace stackprop
