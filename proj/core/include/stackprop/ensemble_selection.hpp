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

#ifndef STACKPROP_ENSEMBLE_SELECTION_HPP_
#define STACKPROP_ENSEMBLE_SELECTION_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "stackprop/types.hpp"

namespace stackprop {

enum class SelectionLoss { kMse, kLogLoss };

std::string SelectionLossName(SelectionLoss loss);
SelectionLoss ParseSelectionLoss(const std::string& name);

inline constexpr double kLogLossClip = 1e-15;

// Mean squared error over all entries, or mean cross-entropy per row with
// probabilities clipped to [kLogLossClip, 1]. `targets` is one-hot for
// classification.
double EvaluateLoss(const Matrix& predictions, const Matrix& targets, SelectionLoss loss);

struct EnsembleWeights {
  std::map<std::string, double> weights;  // every candidate tag, possibly 0
  std::size_t iterations = 0;             // selections behind `weights`
  std::vector<std::string> selections;    // in selection order
  double loss = 0.0;                      // loss of the returned blend
  double best_single_loss = 0.0;
};

inline constexpr std::size_t kDefaultSelectionRounds = 100;

// Greedy forward selection with replacement. Starts from the best single
// model and runs `rounds` selections in total, each adding the model whose
// inclusion gives the lowest loss of the running average (ties go to the
// lexicographically smallest tag). The returned weights are the selection
// counts of the lowest-loss prefix of that sequence, divided by its length.
EnsembleWeights SelectEnsemble(const std::map<std::string, Matrix>& predictions,
                               const Matrix& targets, SelectionLoss loss,
                               std::size_t rounds = kDefaultSelectionRounds);

// sum_m weight_m * predictions[m]. Tags missing from `predictions` with
// nonzero weight raise a config error.
Matrix BlendPredictions(const std::map<std::string, Matrix>& predictions,
                        const EnsembleWeights& weights);

}  // namespace stackprop

#endif  // STACKPROP_ENSEMBLE_SELECTION_HPP_
