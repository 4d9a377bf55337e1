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

#include "stackprop/bagging.hpp"

#include <algorithm>
#include <numeric>

#include "stackprop/error.hpp"
#include "stackprop/parallel.hpp"
#include "stackprop/rng.hpp"

namespace stackprop {

std::vector<std::size_t> FoldPlan::HeldOut(std::size_t repeat, std::size_t fold) const {
  std::vector<std::size_t> out;
  const auto& assign = assignments[repeat];
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if (assign[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::TrainingPositions(std::size_t repeat, std::size_t fold) const {
  std::vector<std::size_t> out;
  const auto& assign = assignments[repeat];
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if (assign[i] != fold) out.push_back(i);
  }
  return out;
}

FoldPlan MakeFoldPlan(std::vector<NodeId> labeled, std::size_t num_folds, std::size_t num_repeats,
                      std::uint64_t seed, const std::optional<Targets>& stratify) {
  Require(num_folds >= 2, ErrorKind::kConfig, "bagging needs at least 2 folds");
  Require(num_repeats >= 1, ErrorKind::kConfig, "bagging needs at least 1 repeat");
  Require(labeled.size() >= num_folds, ErrorKind::kConfig,
          "cannot split " + std::to_string(labeled.size()) + " labeled nodes into " +
              std::to_string(num_folds) + " folds");

  FoldPlan plan;
  plan.num_folds = num_folds;
  plan.num_repeats = num_repeats;
  plan.seed = seed;

  std::vector<std::vector<std::size_t>> by_class;
  if (stratify) {
    Require(stratify->size() == labeled.size(), ErrorKind::kShape,
            "stratification labels do not match labeled nodes");
    Require(stratify->task == Task::kClassification, ErrorKind::kConfig,
            "stratification requires class labels");
    by_class.resize(stratify->num_classes);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      by_class[static_cast<std::size_t>(stratify->values[i])].push_back(i);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (by_class[c].empty()) {
        plan.warnings.push_back("class " + std::to_string(c) +
                                " has no labeled members; stratification disabled");
        by_class.clear();
        break;
      }
    }
  }
  plan.stratified = !by_class.empty();

  const std::size_t m = labeled.size();
  plan.assignments.assign(num_repeats, std::vector<std::uint32_t>(m, 0));
  for (std::size_t r = 0; r < num_repeats; ++r) {
    Rng rng(seed + r);
    auto& assign = plan.assignments[r];
    if (plan.stratified) {
      std::vector<std::size_t> order;
      order.reserve(m);
      for (auto members : by_class) {
        rng.Shuffle(std::span<std::size_t>(members));
        order.insert(order.end(), members.begin(), members.end());
      }
      for (std::size_t p = 0; p < m; ++p) assign[order[p]] = static_cast<std::uint32_t>(p % num_folds);
    } else {
      std::vector<std::size_t> order(m);
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.Shuffle(std::span<std::size_t>(order));
      // The first m % k chunks take one extra node.
      const std::size_t base = m / num_folds;
      const std::size_t extra = m % num_folds;
      std::size_t p = 0;
      for (std::size_t f = 0; f < num_folds; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t s = 0; s < size; ++s) assign[order[p++]] = static_cast<std::uint32_t>(f);
      }
    }
  }
  plan.labeled_nodes = std::move(labeled);
  return plan;
}

ModelPtr DefaultTrainer(const ModelSpec& spec, const Matrix& x, const Targets& y,
                        std::span<const NodeId>) {
  return Train(spec, x, y);
}

std::uint64_t CopySeed(std::uint64_t plan_seed, std::size_t repeat, std::size_t fold,
                       const std::string& tag) {
  return CombineSeed(CombineSeed(CombineSeed(plan_seed, repeat), fold), HashString(tag));
}

namespace {

Matrix GatherRows(const Matrix& m, const std::vector<NodeId>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

OOFMatrix RunBaggedTraining(const FoldPlan& plan, const Matrix& features, const LabelTable& labels,
                            const ModelSpec& spec, const std::vector<NodeId>& unlabeled,
                            const BaggingOptions& options) {
  const std::size_t k = plan.num_folds;
  const std::size_t n = plan.num_repeats;
  const std::size_t m = plan.labeled_nodes.size();
  Require(plan.assignments.size() == n, ErrorKind::kShape, "fold plan is missing repeats");
  Require(static_cast<std::size_t>(features.rows()) == labels.num_nodes(), ErrorKind::kShape,
          "feature rows do not match label table");
  for (NodeId v : plan.labeled_nodes) {
    Require(v < labels.num_nodes() && labels.labeled_mask[v], ErrorKind::kConfig,
            "fold plan node " + std::to_string(v) + " is not labeled");
  }
  spec.Validate(labels.task);

  const std::string tag = spec.tag.empty() ? ModelFamilyName(spec.family) : spec.tag;
  const Targets all_targets = labels.TargetsFor(plan.labeled_nodes);
  const Matrix labeled_x = GatherRows(features, plan.labeled_nodes);
  const Matrix unlabeled_x = GatherRows(features, unlabeled);
  const auto width = static_cast<Eigen::Index>(labels.width());

  OOFMatrix out;
  out.model_tag = tag;
  out.labeled_nodes = plan.labeled_nodes;
  out.unlabeled_nodes = unlabeled;
  out.copies.resize(k * n);

  ParallelFor(k * n, options.workers, [&](std::size_t index) {
    const std::size_t repeat = index / k;
    const std::size_t fold = index % k;
    BaggedCopy& copy = out.copies[index];
    copy.repeat = repeat;
    copy.fold = fold;
    copy.seed = CopySeed(plan.seed, repeat, fold, tag);
    const std::vector<std::size_t> train_pos = plan.TrainingPositions(repeat, fold);
    std::vector<NodeId> ids;
    ids.reserve(train_pos.size());
    Matrix x(static_cast<Eigen::Index>(train_pos.size()), features.cols());
    for (std::size_t r = 0; r < train_pos.size(); ++r) {
      ids.push_back(plan.labeled_nodes[train_pos[r]]);
      x.row(static_cast<Eigen::Index>(r)) = labeled_x.row(static_cast<Eigen::Index>(train_pos[r]));
    }
    ModelSpec copy_spec = spec;
    copy_spec.tag = tag;
    copy_spec.seed = copy.seed;
    try {
      copy.model = options.trainer(copy_spec, x, all_targets.Subset(train_pos), ids);
      copy.labeled_predictions = copy.model->PredictMatrix(labeled_x);
      copy.unlabeled_predictions =
          unlabeled.empty() ? Matrix(0, width) : copy.model->PredictMatrix(unlabeled_x);
    } catch (const std::exception& e) {
      Throw(ErrorKind::kPipeline, "model '" + tag + "' copy (repeat " + std::to_string(repeat) +
                                      ", fold " + std::to_string(fold) + ") failed: " + e.what());
    }
    copy.training_ids = std::move(ids);
    Require(copy.labeled_predictions.cols() == width && copy.labeled_predictions.allFinite() &&
                copy.unlabeled_predictions.allFinite(),
            ErrorKind::kData,
            "model '" + tag + "' copy (repeat " + std::to_string(repeat) + ", fold " +
                std::to_string(fold) + ") produced invalid predictions");
  });

  out.oof = Matrix::Zero(static_cast<Eigen::Index>(m), width);
  out.in_fold = Matrix::Zero(static_cast<Eigen::Index>(m), width);
  out.unlabeled = Matrix::Zero(static_cast<Eigen::Index>(unlabeled.size()), width);
  out.provenance.assign(m, std::vector<std::uint32_t>(n, 0));
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_in_fold = 1.0 / static_cast<double>(n * (k - 1));
  const double inv_kn = 1.0 / static_cast<double>(k * n);
  for (std::size_t repeat = 0; repeat < n; ++repeat) {
    for (std::size_t fold = 0; fold < k; ++fold) {
      const BaggedCopy& copy = out.copies[repeat * k + fold];
      for (std::size_t i = 0; i < m; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        if (plan.assignments[repeat][i] == fold) {
          out.oof.row(row) += inv_n * copy.labeled_predictions.row(row);
          out.provenance[i][repeat] = static_cast<std::uint32_t>(fold);
        } else {
          out.in_fold.row(row) += inv_in_fold * copy.labeled_predictions.row(row);
        }
      }
      out.unlabeled += inv_kn * copy.unlabeled_predictions;
      for (const auto& w : copy.model->warnings()) {
        out.warnings.push_back("repeat " + std::to_string(repeat) + " fold " +
                               std::to_string(fold) + ": " + w);
      }
    }
  }
  return out;
}

void WriteProvenanceCsv(std::ostream& out, const OOFMatrix& oof) {
  out << "node_id,repeat,fold,model_tag\n";
  for (std::size_t i = 0; i < oof.labeled_nodes.size(); ++i) {
    for (std::size_t r = 0; r < oof.provenance[i].size(); ++r) {
      out << oof.labeled_nodes[i] << ',' << r << ',' << oof.provenance[i][r] << ',' << oof.model_tag
          << '\n';
    }
  }
}

}  // namespace stackprop
