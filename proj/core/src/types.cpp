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

#include "stackprop/types.hpp"

#include <cmath>
#include <cstdlib>

#include "stackprop/error.hpp"
#include "stackprop/parallel.hpp"

namespace stackprop {

std::string TaskName(Task task) {
  return task == Task::kRegression ? "regression" : "classification";
}

Task ParseTask(const std::string& name) {
  if (name == "regression") return Task::kRegression;
  if (name == "classification") return Task::kClassification;
  Throw(ErrorKind::kConfig, "unknown task '" + name + "'");
}

Targets Targets::Subset(const std::vector<std::size_t>& rows) const {
  Targets out;
  out.task = task;
  out.num_classes = num_classes;
  out.values.reserve(rows.size());
  for (std::size_t r : rows) out.values.push_back(values[r]);
  return out;
}

Matrix Targets::AsMatrix() const {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(values.size()),
                            static_cast<Eigen::Index>(width()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (task == Task::kRegression) {
      out(i, 0) = values[i];
    } else {
      out(i, static_cast<Eigen::Index>(values[i])) = 1.0;
    }
  }
  return out;
}

std::vector<NodeId> LabelTable::LabeledNodes() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < labeled_mask.size(); ++i) {
    if (labeled_mask[i]) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

std::vector<NodeId> LabelTable::UnlabeledNodes() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < labeled_mask.size(); ++i) {
    if (!labeled_mask[i]) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

Targets LabelTable::TargetsFor(const std::vector<NodeId>& nodes) const {
  Targets out;
  out.task = task;
  out.num_classes = task == Task::kRegression ? 0 : num_classes;
  out.values.reserve(nodes.size());
  for (NodeId v : nodes) {
    Require(v < values.size() && std::isfinite(values[v]), ErrorKind::kData,
            "node " + std::to_string(v) + " has no label");
    out.values.push_back(values[v]);
  }
  return out;
}

void LabelTable::Validate() const {
  Require(values.size() == labeled_mask.size(), ErrorKind::kShape,
          "label values and labeled mask differ in length");
  bool any = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!labeled_mask[i]) continue;
    any = true;
    Require(std::isfinite(values[i]), ErrorKind::kData,
            "labeled node " + std::to_string(i) + " has no label");
    if (task == Task::kClassification) {
      Require(values[i] >= 0 && values[i] < static_cast<double>(num_classes) &&
                  values[i] == std::floor(values[i]),
              ErrorKind::kData, "class index out of range at node " + std::to_string(i));
    }
  }
  Require(any, ErrorKind::kData, "no labeled nodes");
  if (task == Task::kClassification) {
    Require(num_classes >= 2, ErrorKind::kConfig, "classification needs at least two classes");
  }
}

std::size_t DefaultWorkerCount() {
  if (const char* env = std::getenv("STACKPROP_THREADS")) {
    const long parsed = std::strtol(env, nullptr, 10);
    if (parsed > 0) return static_cast<std::size_t>(parsed);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace stackprop
