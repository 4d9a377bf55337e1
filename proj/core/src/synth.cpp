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

#include "stackprop/synth.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "stackprop/error.hpp"
#include "stackprop/leakage_lab.hpp"
#include "stackprop/rng.hpp"

namespace stackprop {

namespace fs = std::filesystem;
using json = nlohmann::json;

void SynthSpec::Validate() const {
  Require(num_nodes >= 4, ErrorKind::kConfig, "synthetic graphs need at least 4 nodes");
  Require(num_blocks >= 2 && num_blocks <= num_nodes, ErrorKind::kConfig,
          "num_blocks must lie in [2, num_nodes]");
  Require(avg_degree > 0.0 && avg_degree < static_cast<double>(num_nodes), ErrorKind::kConfig,
          "avg_degree must be positive and below the node count");
  Require(homophily >= 0.0 && homophily <= 1.0, ErrorKind::kConfig, "homophily must lie in [0, 1]");
  Require(informative_features <= num_features && num_features >= 1, ErrorKind::kConfig,
          "informative_features cannot exceed num_features");
  Require(label_flip >= 0.0 && label_flip < 1.0, ErrorKind::kConfig, "label_flip must lie in [0, 1)");
  Require(smooth_lambda > 0.0 && smooth_lambda < 1.0, ErrorKind::kConfig,
          "smooth_lambda must lie in (0, 1)");
  Require(train_fraction > 0.0 && valid_fraction >= 0.0 && train_fraction + valid_fraction < 1.0,
          ErrorKind::kConfig, "train and valid fractions must leave room for test nodes");
  Require(feature_noise >= 0.0 && label_noise >= 0.0, ErrorKind::kConfig,
          "noise levels must be non-negative");
}

SynthSpec ParseSynthSpec(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    Throw(ErrorKind::kConfig, std::string("synth spec is not valid JSON: ") + e.what());
  }
  static const std::set<std::string> allowed = {
      "task", "nodes", "blocks", "avg_degree", "homophily", "features", "informative_features",
      "gmrf_alpha", "beta", "signal", "label_flip", "smooth_lambda", "smooth_steps",
      "feature_noise", "label_noise", "train_fraction", "valid_fraction", "seed", "output_dir"};
  Require(j.is_object(), ErrorKind::kConfig, "synth spec must be an object");
  for (const auto& [key, value] : j.items()) {
    Require(allowed.count(key) != 0, ErrorKind::kConfig, "unknown key '" + key + "' in synth spec");
  }
  SynthSpec s;
  try {
    s.task = ParseTask(j.value("task", std::string("classification")));
    s.num_nodes = j.value("nodes", s.num_nodes);
    s.num_blocks = j.value("blocks", s.num_blocks);
    s.avg_degree = j.value("avg_degree", s.avg_degree);
    s.homophily = j.value("homophily", s.homophily);
    s.num_features = j.value("features", s.num_features);
    s.informative_features = j.value("informative_features", s.informative_features);
    s.gmrf_alpha = j.value("gmrf_alpha", s.gmrf_alpha);
    s.beta = j.value("beta", s.beta);
    s.signal = j.value("signal", s.signal);
    s.label_flip = j.value("label_flip", s.label_flip);
    s.smooth_lambda = j.value("smooth_lambda", s.smooth_lambda);
    s.smooth_steps = j.value("smooth_steps", s.smooth_steps);
    s.feature_noise = j.value("feature_noise", s.feature_noise);
    s.label_noise = j.value("label_noise", s.label_noise);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.valid_fraction = j.value("valid_fraction", s.valid_fraction);
    s.seed = j.value("seed", s.seed);
    const fs::path out(j.value("output_dir", std::string("synth")));
    s.output_dir = out.is_absolute() ? out : base_dir / out;
  } catch (const json::exception& e) {
    Throw(ErrorKind::kConfig, std::string("synth spec: ") + e.what());
  }
  s.Validate();
  return s;
}

Dataset Synthesize(const SynthSpec& spec) {
  spec.Validate();
  const std::size_t n = spec.num_nodes;
  const std::size_t blocks = spec.num_blocks;
  Rng rng(CombineSeed(spec.seed, 0x73796e));

  // Shuffled, balanced block assignment.
  std::vector<std::size_t> block(n);
  for (std::size_t v = 0; v < n; ++v) block[v] = v % blocks;
  rng.Shuffle(std::span<std::size_t>(block));

  const double block_size = static_cast<double>(n) / static_cast<double>(blocks);
  const double p_in = std::min(1.0, spec.homophily * spec.avg_degree / (block_size - 1.0));
  const double p_out = std::min(
      1.0, (1.0 - spec.homophily) * spec.avg_degree / (static_cast<double>(n) - block_size));
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      if (rng.Uniform01() < (block[u] == block[v] ? p_in : p_out)) edges.emplace_back(u, v);
    }
  }
  Dataset data;
  data.graph = Graph::FromEdges(n, edges);

  const GmrfModel field(data.graph, spec.gmrf_alpha, spec.beta);
  const Matrix noise = SampleGmrf(field, spec.num_features + 1, CombineSeed(spec.seed, 1));

  data.labels.task = spec.task;
  data.labels.values.assign(n, 0.0);
  data.labels.labeled_mask.assign(n, true);
  Vector target(static_cast<Eigen::Index>(n));
  if (spec.task == Task::kClassification) {
    data.labels.num_classes = blocks;
    for (std::size_t v = 0; v < n; ++v) {
      std::size_t label = block[v];
      if (rng.Uniform01() < spec.label_flip) {
        label = (label + 1 + rng.UniformIndex(blocks - 1)) % blocks;
      }
      data.labels.values[v] = static_cast<double>(label);
    }
  } else {
    const SparseOperator op = BuildKernel(data.graph, {});
    Matrix seed_signal = noise.row(static_cast<Eigen::Index>(spec.num_features)).transpose();
    for (std::size_t v = 0; v < n; ++v) {
      seed_signal(static_cast<Eigen::Index>(v), 0) +=
          spec.signal * (2.0 * static_cast<double>(block[v]) / static_cast<double>(blocks - 1) - 1.0);
    }
    const Matrix smooth = SmoothToDepth(seed_signal, op, spec.smooth_lambda, spec.smooth_steps);
    const double mean = smooth.mean();
    const double sd = std::sqrt((smooth.array() - mean).square().mean());
    for (std::size_t v = 0; v < n; ++v) {
      target(static_cast<Eigen::Index>(v)) =
          (smooth(static_cast<Eigen::Index>(v), 0) - mean) / (sd > 0.0 ? sd : 1.0);
      data.labels.values[v] = target(static_cast<Eigen::Index>(v)) + spec.label_noise * rng.Normal();
    }
  }

  data.features = FeatureTable(n);
  for (std::size_t f = 0; f < spec.num_features; ++f) {
    std::vector<double> column(n);
    for (std::size_t v = 0; v < n; ++v) {
      double value = noise(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(v));
      if (f < spec.informative_features) {
        if (spec.task == Task::kClassification) {
          // Block b shifts feature f by signal * cos(2 pi (b + f) / blocks).
          const double angle = 2.0 * M_PI * static_cast<double>(block[v] + f) /
                               static_cast<double>(blocks);
          value += spec.signal * (blocks == 2 ? (block[v] == 0 ? 1.0 : -1.0) : std::cos(angle));
        } else {
          value = target(static_cast<Eigen::Index>(v)) + spec.feature_noise * rng.Normal();
        }
      }
      column[v] = value;
    }
    data.features.AddNumeric("x" + std::to_string(f), std::move(column));
  }

  // Split: shuffled order, first train_fraction train, then valid, rest test.
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), NodeId{0});
  rng.Shuffle(std::span<NodeId>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(spec.valid_fraction * static_cast<double>(n)));
  data.roles.assign(n, Role::kTest);
  for (std::size_t i = 0; i < n; ++i) {
    data.roles[order[i]] = i < n_train ? Role::kTrain : (i < n_train + n_valid ? Role::kValid : Role::kTest);
  }
  return data;
}

DatasetPaths WriteDataset(const fs::path& dir, const Dataset& data) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  Require(!ec, ErrorKind::kIo, "cannot create '" + dir.string() + "'");
  DatasetPaths paths{dir / "edges.txt", dir / "features.csv", dir / "labels.csv", dir / "split.csv"};
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    Require(out.good(), ErrorKind::kIo, "cannot write '" + p.string() + "'");
    return out;
  };
  {
    auto out = open(paths.edges);
    WriteEdgeList(out, data.graph);
  }
  {
    auto out = open(paths.features);
    WriteFeatureCsv(out, data.features);
  }
  {
    auto out = open(paths.labels);
    WriteLabelCsv(out, data.labels);
  }
  {
    auto out = open(paths.split);
    WriteSplitCsv(out, data.roles);
  }
  return paths;
}

}  // namespace stackprop
