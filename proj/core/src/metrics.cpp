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

#include "stackprop/metrics.hpp"

#include "stackprop/error.hpp"

namespace stackprop {

std::string MetricName(Metric metric) { return metric == Metric::kMse ? "mse" : "accuracy"; }

Metric ParseMetric(const std::string& name) {
  if (name == "mse") return Metric::kMse;
  if (name == "accuracy" || name == "acc") return Metric::kAccuracy;
  Throw(ErrorKind::kConfig, "unknown metric '" + name + "'");
}

Metric DefaultMetric(Task task) {
  return task == Task::kRegression ? Metric::kMse : Metric::kAccuracy;
}

Eigen::Index ArgMax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j) {
    if (row(j) > row(best)) best = j;
  }
  return best;
}

double EvaluateMetric(const Matrix& predictions, const LabelTable& truth,
                      const std::vector<NodeId>& nodes, Metric metric) {
  Require(!nodes.empty(), ErrorKind::kConfig, "no nodes selected for evaluation");
  Require(predictions.cols() == static_cast<Eigen::Index>(truth.width()), ErrorKind::kShape,
          "prediction width does not match the labels");
  const Targets targets = truth.TargetsFor(nodes);
  for (NodeId v : nodes) {
    Require(static_cast<Eigen::Index>(v) < predictions.rows(), ErrorKind::kShape,
            "no prediction for node " + std::to_string(v));
  }
  if (metric == Metric::kAccuracy) {
    Require(truth.task == Task::kClassification, ErrorKind::kConfig,
            "accuracy needs class labels");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (ArgMax(predictions.row(nodes[i])) == static_cast<Eigen::Index>(targets.values[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(nodes.size());
  }
  const Matrix expected = targets.AsMatrix();
  double total = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    total += (predictions.row(nodes[i]) - expected.row(static_cast<Eigen::Index>(i))).squaredNorm();
  }
  return total / static_cast<double>(expected.size());
}

}  // namespace stackprop
