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

#ifndef STACKPROP_METRICS_HPP_
#define STACKPROP_METRICS_HPP_

#include <string>
#include <vector>

#include "stackprop/types.hpp"

namespace stackprop {

enum class Metric { kMse, kAccuracy };

std::string MetricName(Metric metric);
Metric ParseMetric(const std::string& name);
Metric DefaultMetric(Task task);

// mse: mean squared error over `nodes` (one-hot targets for classification).
// accuracy: fraction of nodes whose argmax matches the label; ties go to the
// lowest class index. Rows of `predictions` are indexed by node id.
double EvaluateMetric(const Matrix& predictions, const LabelTable& truth,
                      const std::vector<NodeId>& nodes, Metric metric);

// Index of the largest entry; the first one on ties.
Eigen::Index ArgMax(const Eigen::Ref<const Eigen::RowVectorXd>& row);

}  // namespace stackprop

#endif  // STACKPROP_METRICS_HPP_
