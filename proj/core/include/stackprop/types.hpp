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

#ifndef STACKPROP_TYPES_HPP_
#define STACKPROP_TYPES_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace stackprop {

using NodeId = std::uint32_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Task { kRegression, kClassification };

std::string TaskName(Task task);
Task ParseTask(const std::string& name);

// Supervised targets for a set of rows. Classification targets hold the
// class index as an integral double in [0, num_classes).
struct Targets {
  Task task = Task::kRegression;
  std::size_t num_classes = 0;
  std::vector<double> values;

  // Prediction width: 1 for regression, num_classes otherwise.
  std::size_t width() const {
    return task == Task::kRegression ? 1 : num_classes;
  }
  std::size_t size() const { return values.size(); }

  Targets Subset(const std::vector<std::size_t>& rows) const;
  // One row per target; one-hot for classification, the value otherwise.
  Matrix AsMatrix() const;
};

// Labels for every node of a graph; only entries under labeled_mask are
// visible to training. Unknown entries hold NaN.
struct LabelTable {
  Task task = Task::kRegression;
  std::size_t num_classes = 0;
  std::vector<double> values;
  std::vector<bool> labeled_mask;

  std::size_t num_nodes() const { return values.size(); }
  std::size_t width() const { return task == Task::kRegression ? 1 : num_classes; }
  std::vector<NodeId> LabeledNodes() const;
  std::vector<NodeId> UnlabeledNodes() const;
  // Targets of `nodes`; every node must carry a finite label.
  Targets TargetsFor(const std::vector<NodeId>& nodes) const;
  void Validate() const;
};

}  // namespace stackprop

#endif  // STACKPROP_TYPES_HPP_
