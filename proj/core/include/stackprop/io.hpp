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

#ifndef STACKPROP_IO_HPP_
#define STACKPROP_IO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stackprop/correct_smooth.hpp"
#include "stackprop/features.hpp"
#include "stackprop/graph.hpp"
#include "stackprop/leakage_lab.hpp"
#include "stackprop/metrics.hpp"
#include "stackprop/stacking.hpp"
#include "stackprop/types.hpp"

namespace stackprop {

enum class Role { kTrain, kValid, kTest };

std::string RoleName(Role role);
Role ParseRole(const std::string& name);

struct Dataset {
  Graph graph;
  FeatureTable features;
  LabelTable labels;  // every label found in the label file
  std::vector<Role> roles;

  std::size_t num_nodes() const { return graph.num_nodes(); }
  std::vector<NodeId> NodesWithRoles(const std::vector<Role>& wanted) const;
  // Labels restricted to training nodes; everything else unlabeled.
  LabelTable TrainingLabels() const;
};

struct DatasetPaths {
  std::filesystem::path edges;
  std::filesystem::path features;
  std::filesystem::path labels;
  std::filesystem::path split;
};

// Splits one CSV record, honoring double-quoted fields with "" escapes.
std::vector<std::string> SplitCsvLine(const std::string& line);

// Edge list: one "u v" pair per line, blank lines and '#' comments ignored.
std::vector<Edge> ReadEdgeList(std::istream& in);
// Header "node_id,name:kind,..." with kind in num|cat|text. Rows may come in
// any order but must cover ids 0..n-1 exactly once.
FeatureTable ReadFeatureCsv(std::istream& in);
// "node_id,label". Class labels are integers 0..c-1; num_classes 0 infers c.
LabelTable ReadLabelCsv(std::istream& in, std::size_t num_nodes, Task task,
                        std::size_t num_classes = 0);
// "node_id,role" covering every node.
std::vector<Role> ReadSplitCsv(std::istream& in, std::size_t num_nodes);

Dataset LoadDataset(const DatasetPaths& paths, Task task, std::size_t num_classes = 0);

void WriteEdgeList(std::ostream& out, const Graph& graph);
void WriteFeatureCsv(std::ostream& out, const FeatureTable& table);
void WriteLabelCsv(std::ostream& out, const LabelTable& labels);
void WriteSplitCsv(std::ostream& out, const std::vector<Role>& roles);

// "node_id" then one column per output, every value printed with 17
// significant digits so that reading it back is exact.
void WritePredictionCsv(std::ostream& out, const Matrix& values, const std::vector<NodeId>& nodes);
struct PredictionTable {
  std::vector<NodeId> nodes;
  Matrix values;  // rows follow `nodes`
};
PredictionTable ReadPredictionCsv(std::istream& in);

// Shortest decimal text that reads back to the same double, always with a
// decimal point or exponent.
std::string FormatDouble(double value);

// Full pipeline run description, read from JSON. Relative paths resolve
// against the directory of the config file.
struct RunConfig {
  DatasetPaths dataset;
  Task task = Task::kRegression;
  std::size_t num_classes = 0;
  StackConfig stack;
  std::vector<std::vector<ModelSpec>> rosters;
  std::optional<CorrectSmoothConfig> correct_smooth;
  std::optional<Metric> metric;
  std::filesystem::path output_dir;
  std::size_t text_buckets = kDefaultTextBuckets;
  // Ablation settings.
  std::vector<std::size_t> ablation_steps{0, 1, 2, 3, 4};
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2, 3, 4};
  std::string echo;  // canonical JSON of the parsed config
};

RunConfig ParseRunConfig(const std::string& json_text, const std::filesystem::path& base_dir);
RunConfig LoadRunConfig(const std::filesystem::path& path);

struct LeakLabConfig {
  std::size_t num_instances = 10;
  std::size_t num_nodes = 12;
  double edge_prob = 0.3;
  double gmrf_alpha = 1.0;
  double beta = 1.0;
  std::uint64_t seed = 0;
  LeakageExperimentConfig experiment;  // x0, chunks and removed come from each instance
  std::filesystem::path output_dir;
};

LeakLabConfig ParseLeakLabConfig(const std::string& json_text,
                                 const std::filesystem::path& base_dir);

// Line-delimited JSON run log.
class Manifest {
 public:
  explicit Manifest(const std::filesystem::path& path);
  void Config(const std::string& echo);
  void Layer(const LayerState& state);
  void Weights(const EnsembleWeights& weights);
  void Metric(const std::string& split, stackprop::Metric metric, double value);
  void Note(const std::string& key, const std::string& value);
  void Write(const std::string& json_line);

 private:
  std::filesystem::path path_;
};

// Model directory: metadata.json, one binary file per fitted copy, frozen
// labeled stacker rows, the fitted feature encoder, the graph and the
// training labels.
void SaveModelDir(const std::filesystem::path& dir, const FinalPredictor& predictor,
                  const EncoderState& encoder, const Graph& graph, const LabelTable& labels,
                  const std::optional<CorrectSmoothConfig>& correct_smooth);

struct LoadedModel {
  FinalPredictor predictor;
  EncoderState encoder;
  Graph graph;
  LabelTable labels;
  std::optional<CorrectSmoothConfig> correct_smooth;
};

LoadedModel LoadModelDir(const std::filesystem::path& dir);

std::string ReadTextFile(const std::filesystem::path& path);

}  // namespace stackprop

#endif  // STACKPROP_IO_HPP_
