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

#ifndef STACKPROP_CORRECT_SMOOTH_HPP_
#define STACKPROP_CORRECT_SMOOTH_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "stackprop/graph.hpp"
#include "stackprop/types.hpp"

namespace stackprop {

enum class ScaleMode { kFixed, kAutoscale };

struct CorrectSmoothConfig {
  bool correct_enabled = true;
  double correct_lambda = 0.8;
  KernelSpec correct_kernel{KernelKind::kRowNormAdjacency};
  // Absent: the smooth phase is skipped.
  std::optional<double> smooth_lambda = 0.5;
  KernelSpec smooth_kernel{KernelKind::kRowNormAdjacency};
  std::size_t num_propagation = 5;
  ScaleMode scale_mode = ScaleMode::kFixed;
  double scale = 1.0;
  std::size_t workers = 1;

  void Validate() const;
};

struct CorrectSmoothResult {
  PredictionFrame frame;
  double scale = 1.0;  // residual scale actually applied
  std::vector<std::string> warnings;
};

// Residual correction followed by label smoothing.
//
// Correct: residuals E0 = labels - preds on labeled rows (0 elsewhere) are
// spread with E <- (1 - l1) E0 + l1 K1 E, then preds += scale * E. In
// autoscale mode scale = sum_L |E0| / (|L| mean_U |E|) with row L1 norms.
// Smooth: G0 = corrected preds with labeled rows replaced by the labels,
// then G <- (1 - l2) G0 + l2 K2 G.
CorrectSmoothResult CorrectAndSmooth(const PredictionFrame& preds, const LabelTable& labels,
                                     const Graph& graph, const CorrectSmoothConfig& cfg);

}  // namespace stackprop

#endif  // STACKPROP_CORRECT_SMOOTH_HPP_
