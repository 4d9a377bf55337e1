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

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "stackprop/error.hpp"
#include "stackprop/io.hpp"
#include "stackprop/metrics.hpp"
#include "test_util.hpp"

namespace stackprop {
namespace {

namespace fs = std::filesystem;

const fs::path kToy = fs::path(STACKPROP_TEST_DATA_DIR) / "toy";

DatasetPaths ToyPaths() {
  return {kToy / "edges.txt", kToy / "features.csv", kToy / "labels.csv", kToy / "split.csv"};
}

ErrorKind KindOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kIo;
}

fs::path ScratchDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stackprop_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(DatasetTest, LoadsToyData) {
  const Dataset data = LoadDataset(ToyPaths(), Task::kRegression);
  EXPECT_EQ(data.num_nodes(), 24u);
  ASSERT_EQ(data.features.columns().size(), 3u);
  EXPECT_EQ(data.features.columns()[0].kind, ColumnKind::kNumeric);
  EXPECT_TRUE(std::isnan(data.features.columns()[0].numeric[5]));
  EXPECT_EQ(data.features.columns()[1].strings[2], "blue");
  EXPECT_EQ(data.features.columns()[2].strings[0], "alpha beta");
  EXPECT_EQ(data.roles[2], Role::kValid);
  EXPECT_EQ(data.NodesWithRoles({Role::kTrain}).size(), 12u);
  const LabelTable train = data.TrainingLabels();
  EXPECT_TRUE(train.labeled_mask[0]);
  EXPECT_FALSE(train.labeled_mask[2]);
  EXPECT_TRUE(data.labels.labeled_mask[2]);
  EXPECT_TRUE(data.graph.HasEdge(0, 1));
  EXPECT_TRUE(data.graph.HasEdge(23, 0));
}

TEST(DatasetTest, EdgeListIsSymmetrizedAndDeduplicated) {
  std::istringstream in("# comment\n0 1\n1 0\n\n2 1  # trailing\n2 2\n");
  const auto edges = ReadEdgeList(in);
  EXPECT_EQ(edges.size(), 4u);
  const Graph g = Graph::FromEdges(3, edges);
  EXPECT_EQ(g.num_edges(), 2u);
  EXPECT_TRUE(g.HasEdge(1, 2));
  EXPECT_FALSE(g.HasEdge(2, 2));
}

TEST(DatasetTest, ParseErrorsNameTheLine) {
  std::istringstream edges("0 1\n1 x\n");
  try {
    ReadEdgeList(edges);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  std::istringstream labels("node_id,label\n0,1.5\n1,abc\n");
  try {
    ReadLabelCsv(labels, 3, Task::kRegression);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream features("node_id,x:numeric\n0,1\n1,2,3\n");
  EXPECT_EQ(KindOf([&] { ReadFeatureCsv(features); }), ErrorKind::kParse);
  std::istringstream bad_kind("node_id,x:vector\n0,1\n");
  EXPECT_EQ(KindOf([&] { ReadFeatureCsv(bad_kind); }), ErrorKind::kParse);
  std::istringstream bad_header("id,label\n");
  EXPECT_EQ(KindOf([&] { ReadLabelCsv(bad_header, 1, Task::kRegression); }), ErrorKind::kParse);
}

TEST(DatasetTest, IntegrityErrors) {
  std::istringstream split("node_id,role\n0,train\n2,test\n");
  try {
    ReadSplitCsv(split, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIntegrity);
    EXPECT_NE(std::string(e.what()).find("1 node(s) missing"), std::string::npos) << e.what();
  }
  std::istringstream dup("node_id,label\n0,1\n0,2\n");
  EXPECT_EQ(KindOf([&] { ReadLabelCsv(dup, 2, Task::kRegression); }), ErrorKind::kIntegrity);
  std::istringstream gap("node_id,x:numeric\n0,1\n2,2\n");
  EXPECT_EQ(KindOf([&] { ReadFeatureCsv(gap); }), ErrorKind::kIntegrity);

  const fs::path dir = ScratchDir("integrity");
  fs::copy(kToy, dir, fs::copy_options::recursive);
  std::ofstream(dir / "edges.txt", std::ios::app) << "3 99\n";
  DatasetPaths paths{dir / "edges.txt", dir / "features.csv", dir / "labels.csv", dir / "split.csv"};
  try {
    LoadDataset(paths, Task::kRegression);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIntegrity);
    EXPECT_NE(std::string(e.what()).find("99"), std::string::npos);
  }
  paths.edges = dir / "missing.txt";
  EXPECT_EQ(KindOf([&] { LoadDataset(paths, Task::kRegression); }), ErrorKind::kIo);
}

TEST(DatasetTest, ClassLabelsMustBeIntegers) {
  std::istringstream in("node_id,label\n0,1.5\n");
  EXPECT_EQ(KindOf([&] { ReadLabelCsv(in, 1, Task::kClassification); }), ErrorKind::kParse);
  std::istringstream ok("node_id,label\n0,2\n1,\n");
  const auto labels = ReadLabelCsv(ok, 3, Task::kClassification);
  EXPECT_EQ(labels.num_classes, 3u);
  EXPECT_FALSE(labels.labeled_mask[1]);
  std::istringstream over("node_id,label\n0,4\n");
  EXPECT_EQ(KindOf([&] { ReadLabelCsv(over, 1, Task::kClassification, 3); }), ErrorKind::kData);
}

TEST(DatasetTest, WriteReadRoundTrip) {
  const Dataset data = LoadDataset(ToyPaths(), Task::kRegression);
  std::stringstream features, labels, split, edges;
  WriteFeatureCsv(features, data.features);
  WriteLabelCsv(labels, data.labels);
  WriteSplitCsv(split, data.roles);
  WriteEdgeList(edges, data.graph);
  const FeatureTable table = ReadFeatureCsv(features);
  EXPECT_EQ(table.columns()[1].strings, data.features.columns()[1].strings);
  EXPECT_EQ(table.columns()[2].strings, data.features.columns()[2].strings);
  const auto reread = ReadLabelCsv(labels, 24, Task::kRegression);
  EXPECT_EQ(reread.values, data.labels.values);
  EXPECT_EQ(ReadSplitCsv(split, 24), data.roles);
  EXPECT_EQ(Graph::FromEdges(24, ReadEdgeList(edges)).EdgeList(), data.graph.EdgeList());
}

TEST(MetricTest, HandExamples) {
  Matrix reg(3, 1);
  reg << 1.0, 2.0, 4.0;
  const auto truth = testing::RegressionLabels({1.0, 3.0, 4.0}, {true, true, true});
  EXPECT_DOUBLE_EQ(EvaluateMetric(reg, truth, {0, 1}, Metric::kMse), 0.5);
  EXPECT_DOUBLE_EQ(EvaluateMetric(reg, truth, {0, 1, 2}, Metric::kMse), 1.0 / 3.0);

  Matrix probs(2, 3);
  probs << 0.4, 0.4, 0.2,  // tie resolves to class 0
      0.1, 0.2, 0.7;
  const auto classes = testing::ClassLabels({0.0, 1.0}, {true, true}, 3);
  EXPECT_DOUBLE_EQ(EvaluateMetric(probs, classes, {0, 1}, Metric::kAccuracy), 0.5);
  EXPECT_EQ(ArgMax(probs.row(0)), 0);

  EXPECT_EQ(KindOf([&] { EvaluateMetric(reg, truth, {}, Metric::kMse); }), ErrorKind::kConfig);
  const auto partial = testing::RegressionLabels({1.0, NAN, 4.0}, {true, false, true});
  EXPECT_THROW(EvaluateMetric(reg, partial, {1}, Metric::kMse), Error);
  EXPECT_EQ(ParseMetric("accuracy"), Metric::kAccuracy);
  EXPECT_EQ(DefaultMetric(Task::kRegression), Metric::kMse);
}

TEST(PredictionCsvTest, RoundTripsExactly) {
  Matrix values = testing::RandomMatrix(5, 3, 2);
  values(1, 1) = 1e-300;
  values(2, 2) = 3.0;
  std::stringstream buffer;
  WritePredictionCsv(buffer, values, {0, 1, 2, 3, 4});
  EXPECT_EQ(buffer.str().substr(0, 18), "node_id,p0,p1,p2\n0");
  const auto table = ReadPredictionCsv(buffer);
  EXPECT_EQ(table.nodes, (std::vector<NodeId>{0, 1, 2, 3, 4}));
  EXPECT_EQ(table.values, values);
  EXPECT_EQ(FormatDouble(3.0), "3.0");
  EXPECT_EQ(FormatDouble(0.1), "0.1");
  EXPECT_EQ(FormatDouble(-2.5e-7), "-2.5e-07");

  std::stringstream single;
  WritePredictionCsv(single, values.col(0), {4, 2});
  EXPECT_EQ(single.str().substr(0, 20), "node_id,prediction\n4");
  EXPECT_THROW(WritePredictionCsv(single, values, {9}), Error);
}

TEST(ConfigTest, ParsesToyConfig) {
  const RunConfig cfg = LoadRunConfig(kToy / "config.json");
  EXPECT_EQ(cfg.stack.num_layers, 2u);
  EXPECT_EQ(cfg.stack.num_folds, 3u);
  EXPECT_DOUBLE_EQ(cfg.stack.propagation.lambda, 0.8);
  EXPECT_EQ(cfg.stack.seed, 7u);
  ASSERT_EQ(cfg.rosters.size(), 2u);
  EXPECT_EQ(cfg.rosters[0][1].hyperparameters.at("neighbors"), 3.0);
  ASSERT_TRUE(cfg.correct_smooth.has_value());
  EXPECT_DOUBLE_EQ(cfg.correct_smooth->correct_lambda, 0.8);
  EXPECT_EQ(cfg.dataset.edges, kToy / "edges.txt");
  EXPECT_EQ(cfg.output_dir, kToy / "out");
  EXPECT_EQ(cfg.ablation_seeds, (std::vector<std::uint64_t>{0, 1}));
  // The echo parses back to the same settings.
  const RunConfig again = ParseRunConfig(cfg.echo, kToy);
  EXPECT_EQ(again.echo, cfg.echo);
}

TEST(ConfigTest, RejectsUnknownKeysAndBadValues) {
  const std::string dataset =
      R"("dataset": {"edges": "e", "features": "f", "labels": "l", "split": "s"})";
  EXPECT_EQ(KindOf([&] { ParseRunConfig("{" + dataset + R"(, "colour": 1})", "."); }),
            ErrorKind::kConfig);
  EXPECT_EQ(KindOf([&] { ParseRunConfig("{" + dataset + R"(, "stack": {"folds": "x"}})", "."); }),
            ErrorKind::kConfig);
  EXPECT_EQ(KindOf([&] { ParseRunConfig("{" + dataset + R"(, "stack": {"num_layers": 2},
            "rosters": [[{"family": "ridge_linear"}]]})", "."); }),
            ErrorKind::kConfig);
  EXPECT_EQ(KindOf([&] { ParseRunConfig(R"({"task": "regression"})", "."); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([&] { ParseRunConfig("{not json", "."); }), ErrorKind::kConfig);
  EXPECT_EQ(KindOf([&] { ParseLeakLabConfig(R"({"experiment": {}})", "."); }), ErrorKind::kConfig);
  const auto lab = ParseLeakLabConfig(R"({"instances": 3, "clip": null, "model": {"family": "ridge_linear"}})", ".");
  EXPECT_EQ(lab.num_instances, 3u);
  EXPECT_FALSE(lab.experiment.clip.has_value());
  EXPECT_FALSE(lab.experiment.model.identity);
}

TEST(ModelDirTest, SaveLoadPredictsIdentically) {
  const Dataset data = LoadDataset(ToyPaths(), Task::kRegression);
  std::vector<std::size_t> rows(24);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const EncodedFeatures encoded = EncodeFeatures(data.features, rows);
  StackConfig cfg;
  cfg.num_layers = 2;
  cfg.num_folds = 3;
  cfg.propagation.num_steps = 2;
  const std::vector<std::vector<ModelSpec>> rosters{
      {MakeSpec(ModelFamily::kRidgeLinear), MakeSpec(ModelFamily::kGbdt, "", {{"trees", 10}})},
      {MakeSpec(ModelFamily::kKnn, "", {{"neighbors", 3}})}};
  const LabelTable train = data.TrainingLabels();
  const FinalPredictor pred = RunPipeline(data.graph, encoded.values, train, cfg, rosters);
  const fs::path dir = ScratchDir("model");
  SaveModelDir(dir, pred, encoded.state, data.graph, train, CorrectSmoothConfig{});
  const LoadedModel loaded = LoadModelDir(dir);
  EXPECT_EQ(loaded.graph.EdgeList(), data.graph.EdgeList());
  EXPECT_EQ(loaded.labels.labeled_mask, train.labeled_mask);
  ASSERT_TRUE(loaded.correct_smooth.has_value());
  const Matrix x = loaded.encoder.Apply(data.features);
  EXPECT_EQ(x, encoded.values);
  EXPECT_EQ(loaded.predictor.Predict(loaded.graph, x).values, pred.output.values);
  EXPECT_EQ(loaded.predictor.weights.weights, pred.weights.weights);

  fs::remove(dir / "metadata.json");
  EXPECT_THROW(LoadModelDir(dir), Error);
}

TEST(ManifestTest, AppendsJsonLines) {
  const fs::path dir = ScratchDir("manifest");
  Manifest manifest(dir / "manifest.jsonl");
  manifest.Note("scale", "1.0");
  manifest.Metric("test", Metric::kMse, 0.25);
  std::ifstream in(dir / "manifest.jsonl");
  std::string line;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++count;
    EXPECT_EQ(line.front(), '{');
    EXPECT_EQ(line.back(), '}');
  }
  EXPECT_EQ(count, 2u);
}

}  // namespace
}  // namespace stackprop
