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

#include "stackprop/ensemble_selection.hpp"

#include <algorithm>
#include <cmath>

#include "stackprop/error.hpp"

namespace stackprop {

std::string SelectionLossName(SelectionLoss loss) {
  return loss == SelectionLoss::kMse ? "mse" : "log_loss";
}

SelectionLoss ParseSelectionLoss(const std::string& name) {
  if (name == "mse") return SelectionLoss::kMse;
  if (name == "log_loss" || name == "logloss") return SelectionLoss::kLogLoss;
  Throw(ErrorKind::kConfig, "unknown selection loss '" + name + "'");
}

double EvaluateLoss(const Matrix& predictions, const Matrix& targets, SelectionLoss loss) {
  Require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
          ErrorKind::kShape, "prediction and target shapes differ");
  Require(predictions.rows() > 0, ErrorKind::kConfig, "loss over zero rows");
  if (loss == SelectionLoss::kMse) {
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
    for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
      const double t = targets(i, j);
      if (t == 0.0) continue;
      total -= t * std::log(std::clamp(predictions(i, j), kLogLossClip, 1.0));
    }
  }
  return total / static_cast<double>(predictions.rows());
}

EnsembleWeights SelectEnsemble(const std::map<std::string, Matrix>& predictions,
                               const Matrix& targets, SelectionLoss loss, std::size_t rounds) {
  Require(!predictions.empty(), ErrorKind::kConfig, "ensemble selection needs at least one model");
  Require(rounds >= 1, ErrorKind::kConfig, "ensemble selection needs at least one round");
  for (const auto& [tag, m] : predictions) {
    Require(m.rows() == targets.rows() && m.cols() == targets.cols(), ErrorKind::kShape,
            "predictions of '" + tag + "' do not match the targets");
    Require(m.allFinite(), ErrorKind::kData, "predictions of '" + tag + "' are not finite");
  }

  EnsembleWeights out;
  Matrix sum = Matrix::Zero(targets.rows(), targets.cols());
  std::vector<double> prefix_loss;
  for (std::size_t round = 0; round < rounds; ++round) {
    const double count = static_cast<double>(round + 1);
    const std::string* best_tag = nullptr;
    double best = 0.0;
    for (const auto& [tag, m] : predictions) {
      const double value = EvaluateLoss((sum + m) / count, targets, loss);
      if (best_tag == nullptr || value < best) {
        best = value;
        best_tag = &tag;
      }
    }
    sum += predictions.at(*best_tag);
    out.selections.push_back(*best_tag);
    prefix_loss.push_back(best);
  }

  const auto best_it = std::min_element(prefix_loss.begin(), prefix_loss.end());
  out.iterations = static_cast<std::size_t>(best_it - prefix_loss.begin()) + 1;
  out.loss = *best_it;
  out.best_single_loss = prefix_loss.front();
  for (const auto& [tag, m] : predictions) out.weights[tag] = 0.0;
  for (std::size_t i = 0; i < out.iterations; ++i) out.weights[out.selections[i]] += 1.0;
  for (auto& [tag, w] : out.weights) w /= static_cast<double>(out.iterations);
  return out;
}

Matrix BlendPredictions(const std::map<std::string, Matrix>& predictions,
                        const EnsembleWeights& weights) {
  Matrix out;
  for (const auto& [tag, w] : weights.weights) {
    if (w == 0.0) continue;
    const auto it = predictions.find(tag);
    Require(it != predictions.end(), ErrorKind::kConfig, "no predictions for '" + tag + "'");
    if (out.size() == 0) {
      out = w * it->second;
    } else {
      Require(out.rows() == it->second.rows() && out.cols() == it->second.cols(),
              ErrorKind::kShape, "blended prediction shapes differ");
      out += w * it->second;
    }
  }
  Require(out.size() > 0 || !weights.weights.empty(), ErrorKind::kConfig, "empty ensemble");
  return out;
}

}  // namespace stackprop
