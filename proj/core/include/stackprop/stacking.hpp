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

#ifndef STACKPROP_STACKING_HPP_
#define STACKPROP_STACKING_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stackprop/bagging.hpp"
#include "stackprop/ensemble_selection.hpp"
#include "stackprop/graph.hpp"
#include "stackprop/metrics.hpp"
#include "stackprop/models.hpp"
#include "stackprop/types.hpp"

namespace stackprop {

enum class SelectionSet { kOutOfFold, kValidation };

struct StackConfig {
  std::size_t num_layers = 2;
  std::size_t num_folds = 5;
  std::size_t num_repeats = 1;
  PropagationConfig propagation;
  // Propagation depths appended to the features; empty means 0..T.
  std::vector<std::size_t> step_subset;
  bool include_raw_features = true;
  // false: labeled rows of each stacker input carry in-fold predictions
  // (copies that trained on the node) instead of out-of-fold ones.
  bool bagging = true;
  // One fold plan per layer shared by the whole roster, or one per model.
  bool shared_fold_plan = true;
  // Unset: stratified for classification only.
  std::optional<bool> stratify;
  std::optional<SelectionLoss> selection_loss;
  std::size_t selection_rounds = kDefaultSelectionRounds;
  SelectionSet selection_set = SelectionSet::kOutOfFold;
  std::size_t max_model_fits = 100000;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  Trainer trainer = DefaultTrainer;

  void Validate() const;
  // Resolved step subset, sorted.
  std::vector<std::size_t> Steps() const;
};

// Labeled nodes held out for ensemble selection in SelectionSet::kValidation.
struct SelectionSplit {
  std::vector<NodeId> nodes;
  Targets targets;
};

struct LayerModelOutput {
  ModelSpec spec;  // tag resolved
  OOFMatrix bagged;
  Matrix base;                 // n x c stacker input before propagation
  std::vector<Matrix> blocks;  // propagated frames at Steps(); empty on the top layer
  double oof_loss = 0.0;
  double seconds = 0.0;
};

struct LayerState {
  std::size_t layer_index = 0;
  Matrix input;  // features consumed by this layer's models
  std::vector<FoldPlan> plans;  // one shared plan, or one per model
  std::vector<LayerModelOutput> models;
  double seconds = 0.0;
};

// Bags every roster model on `input`, assembles its base frame (labeled rows
// out-of-fold or in-fold, other rows the mean over all copies) and, unless
// `top`, propagates it over the whole graph.
LayerState RunLayer(std::size_t layer_index, const Matrix& input,
                    const std::vector<ModelSpec>& roster, const Graph& graph,
                    const LabelTable& labels, const StackConfig& cfg, bool top);

// Features of the layer after `state`: the previous input (dropped after the
// first layer when raw features are excluded) followed by every propagated
// block, model-major then depth.
Matrix NextLayerInput(const LayerState& state, const StackConfig& cfg);

// Fitted copies and frozen labeled rows of one stacked model; enough to
// recompute the pipeline output for new feature rows.
struct StackedModel {
  ModelSpec spec;
  std::vector<ModelPtr> copies;  // repeat-major
  Matrix labeled_base;           // rows follow FinalPredictor::labeled_nodes
};

struct FinalPredictor {
  StackConfig config;
  Task task = Task::kRegression;
  std::size_t num_classes = 0;
  std::size_t num_nodes = 0;
  std::vector<NodeId> labeled_nodes;
  std::vector<NodeId> unlabeled_nodes;
  std::vector<std::vector<StackedModel>> layers;
  EnsembleWeights weights;
  PredictionFrame output;          // blended top-layer predictions, every node
  std::vector<LayerState> states;  // training artifacts; empty after loading

  std::size_t width() const { return task == Task::kRegression ? 1 : num_classes; }

  // Replays the stack with the stored copies on new features of the same
  // nodes. Labeled rows keep their stored stacker inputs.
  PredictionFrame Predict(const Graph& graph, const Matrix& features) const;
};

// Runs num_layers layers and fits ensemble weights over the top layer.
// `labels` holds the training labels; every other node is treated as
// unlabeled. `features` rows are indexed by node id.
FinalPredictor RunPipeline(const Graph& graph, const Matrix& features, const LabelTable& labels,
                           const StackConfig& cfg,
                           const std::vector<std::vector<ModelSpec>>& rosters,
                           const std::optional<SelectionSplit>& validation = std::nullopt);

struct AblationRow {
  std::size_t steps = 0;
  bool bagging = true;
  double mean = 0.0;
  double stddev = 0.0;  // population deviation over seeds
  std::vector<double> values;
};

// Evaluates the pipeline for each propagation depth and bagging mode over
// the given seeds. The first layer does not depend on either setting, so it
// is trained once per seed and shared.
std::vector<AblationRow> RunAblation(const Graph& graph, const Matrix& features,
                                     const LabelTable& labels, const StackConfig& cfg,
                                     const std::vector<std::vector<ModelSpec>>& rosters,
                                     const std::vector<std::size_t>& step_values,
                                     const std::vector<bool>& bagging_modes,
                                     const std::vector<std::uint64_t>& seeds,
                                     const LabelTable& truth, const std::vector<NodeId>& eval_nodes,
                                     Metric metric);

}  // namespace stackprop

#endif  // STACKPROP_STACKING_HPP_
