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

#include "stackprop/correct_smooth.hpp"

#include <cmath>

#include "stackprop/error.hpp"

namespace stackprop {

namespace {

void CheckLambda(double lambda, const char* name) {
  Require(std::isfinite(lambda) && lambda > 0.0 && lambda <= 1.0, ErrorKind::kConfig,
          std::string(name) + " must lie in (0, 1]");
}

Matrix LabelRows(const LabelTable& labels) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.num_nodes()),
                            static_cast<Eigen::Index>(labels.width()));
  for (std::size_t v = 0; v < labels.num_nodes(); ++v) {
    if (!labels.labeled_mask[v]) continue;
    if (labels.task == Task::kRegression) {
      out(static_cast<Eigen::Index>(v), 0) = labels.values[v];
    } else {
      out(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(labels.values[v])) = 1.0;
    }
  }
  return out;
}

}  // namespace

void CorrectSmoothConfig::Validate() const {
  Require(num_propagation >= 1, ErrorKind::kConfig, "num_propagation must be at least 1");
  if (correct_enabled) CheckLambda(correct_lambda, "correct lambda");
  if (smooth_lambda) CheckLambda(*smooth_lambda, "smooth lambda");
  Require(scale_mode != ScaleMode::kFixed || (std::isfinite(scale) && scale > 0.0),
          ErrorKind::kConfig, "fixed scale must be positive");
}

CorrectSmoothResult CorrectAndSmooth(const PredictionFrame& preds, const LabelTable& labels,
                                     const Graph& graph, const CorrectSmoothConfig& cfg) {
  cfg.Validate();
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  Require(preds.values.rows() == n && labels.num_nodes() == graph.num_nodes(), ErrorKind::kShape,
          "predictions, labels and graph disagree on the node count");
  Require(preds.values.cols() == static_cast<Eigen::Index>(labels.width()), ErrorKind::kShape,
          "prediction width does not match the labels");

  CorrectSmoothResult result;
  result.frame = preds;
  if (!cfg.correct_enabled && !cfg.smooth_lambda) return result;

  const Matrix truth = LabelRows(labels);
  Matrix& values = result.frame.values;

  if (cfg.correct_enabled) {
    Matrix residual = Matrix::Zero(n, values.cols());
    for (Eigen::Index v = 0; v < n; ++v) {
      if (labels.labeled_mask[static_cast<std::size_t>(v)]) residual.row(v) = truth.row(v) - preds.values.row(v);
    }
    const SparseOperator k1 = BuildKernel(graph, cfg.correct_kernel);
    const Matrix spread =
        SmoothToDepth(residual, k1, cfg.correct_lambda, cfg.num_propagation, cfg.workers);
    double scale = cfg.scale;
    if (cfg.scale_mode == ScaleMode::kAutoscale) {
      double labeled_sum = 0.0;
      double unlabeled_sum = 0.0;
      std::size_t labeled_count = 0;
      std::size_t unlabeled_count = 0;
      for (Eigen::Index v = 0; v < n; ++v) {
        if (labels.labeled_mask[static_cast<std::size_t>(v)]) {
          labeled_sum += residual.row(v).cwiseAbs().sum();
          ++labeled_count;
        } else {
          unlabeled_sum += spread.row(v).cwiseAbs().sum();
          ++unlabeled_count;
        }
      }
      const double denom = unlabeled_count == 0
                               ? 0.0
                               : static_cast<double>(labeled_count) * unlabeled_sum /
                                     static_cast<double>(unlabeled_count);
      if (denom > 0.0 && std::isfinite(denom)) {
        scale = labeled_sum / denom;
      } else {
        scale = 1.0;
        result.warnings.push_back("autoscale denominator is zero; using scale 1");
      }
    }
    result.scale = scale;
    values += scale * spread;
  }

  if (cfg.smooth_lambda) {
    for (Eigen::Index v = 0; v < n; ++v) {
      if (labels.labeled_mask[static_cast<std::size_t>(v)]) values.row(v) = truth.row(v);
    }
    const SparseOperator k2 = BuildKernel(graph, cfg.smooth_kernel);
    values = SmoothToDepth(values, k2, *cfg.smooth_lambda, cfg.num_propagation, cfg.workers);
  }
  Require(values.allFinite(), ErrorKind::kNumeric, "correct and smooth produced non-finite values");
  return result;
}

}  // namespace stackprop
