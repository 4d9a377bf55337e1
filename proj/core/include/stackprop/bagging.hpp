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

#ifndef STACKPROP_BAGGING_HPP_
#define STACKPROP_BAGGING_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stackprop/models.hpp"
#include "stackprop/types.hpp"

namespace stackprop {

// n-repeated k-fold partition of the labeled nodes.
struct FoldPlan {
  std::vector<NodeId> labeled_nodes;
  std::size_t num_folds = 0;
  std::size_t num_repeats = 0;
  std::uint64_t seed = 0;
  bool stratified = false;
  // assignments[repeat][i] is the fold of labeled_nodes[i].
  std::vector<std::vector<std::uint32_t>> assignments;
  std::vector<std::string> warnings;

  // Positions (into labeled_nodes) held out by / trained on by copy
  // (repeat, fold).
  std::vector<std::size_t> HeldOut(std::size_t repeat, std::size_t fold) const;
  std::vector<std::size_t> TrainingPositions(std::size_t repeat, std::size_t fold) const;
};

// Each repeat shuffles with seed `seed + repeat` and slices into k
// contiguous chunks. With `stratify`, shuffled per-class lists are
// concatenated and dealt round-robin so both overall and per-class fold sizes
// differ by at most one. A declared class with no labeled member falls back
// to the unstratified plan and records a warning.
FoldPlan MakeFoldPlan(std::vector<NodeId> labeled, std::size_t num_folds, std::size_t num_repeats,
                      std::uint64_t seed, const std::optional<Targets>& stratify = std::nullopt);

// Trains one model copy on the given rows. `training_ids` are the graph node
// ids of those rows.
using Trainer = std::function<ModelPtr(const ModelSpec& spec, const Matrix& x, const Targets& y,
                                       std::span<const NodeId> training_ids)>;

ModelPtr DefaultTrainer(const ModelSpec& spec, const Matrix& x, const Targets& y,
                        std::span<const NodeId> training_ids);

struct BaggingOptions {
  std::size_t workers = 1;
  Trainer trainer = DefaultTrainer;
};

// One trained copy of a bagged model and its raw predictions.
struct BaggedCopy {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::vector<NodeId> training_ids;
  Matrix labeled_predictions;    // rows follow FoldPlan::labeled_nodes
  Matrix unlabeled_predictions;  // rows follow OOFMatrix::unlabeled_nodes
  ModelPtr model;
};

struct OOFMatrix {
  std::string model_tag;
  std::vector<NodeId> labeled_nodes;
  std::vector<NodeId> unlabeled_nodes;
  Matrix oof;        // |L| x c: mean over repeats of the held-out copy's prediction
  Matrix in_fold;    // |L| x c: mean over repeats of copies that trained on the node
  Matrix unlabeled;  // |U| x c: mean over all k n copies
  // provenance[i][repeat]: the fold whose copy produced labeled_nodes[i]'s
  // out-of-fold value in that repeat.
  std::vector<std::vector<std::uint32_t>> provenance;
  std::vector<BaggedCopy> copies;  // repeat-major, fold-minor
  std::vector<std::string> warnings;

  const BaggedCopy& copy(std::size_t repeat, std::size_t fold, std::size_t num_folds) const {
    return copies[repeat * num_folds + fold];
  }
};

// Seed of copy (repeat, fold) of the model tagged `tag`.
std::uint64_t CopySeed(std::uint64_t plan_seed, std::size_t repeat, std::size_t fold,
                       const std::string& tag);

// Trains k n copies of `spec` (copy (i, j) on every labeled node outside fold
// j of repeat i) and assembles out-of-fold and unlabeled predictions.
// `features` and `labels` are indexed by graph node id. Copies may train
// concurrently; aggregation order is fixed.
OOFMatrix RunBaggedTraining(const FoldPlan& plan, const Matrix& features, const LabelTable& labels,
                            const ModelSpec& spec, const std::vector<NodeId>& unlabeled,
                            const BaggingOptions& options = {});

// node_id,repeat,fold,model_tag rows for every labeled node and repeat.
void WriteProvenanceCsv(std::ostream& out, const OOFMatrix& oof);

}  // namespace stackprop

#endif  // STACKPROP_BAGGING_HPP_
