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

#include "stackprop/stacking.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "stackprop/error.hpp"
#include "stackprop/parallel.hpp"
#include "stackprop/rng.hpp"

namespace stackprop {

namespace {

double SecondsSince(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string ResolvedTag(const ModelSpec& spec) {
  return spec.tag.empty() ? ModelFamilyName(spec.family) : spec.tag;
}

SelectionLoss ResolvedLoss(const StackConfig& cfg, Task task) {
  const SelectionLoss loss = cfg.selection_loss.value_or(
      task == Task::kRegression ? SelectionLoss::kMse : SelectionLoss::kLogLoss);
  Require(!(loss == SelectionLoss::kLogLoss && task == Task::kRegression), ErrorKind::kConfig,
          "log_loss selection needs class labels");
  return loss;
}

Matrix AssembleBase(std::size_t num_nodes, const std::vector<NodeId>& labeled,
                    const Matrix& labeled_rows, const std::vector<NodeId>& unlabeled,
                    const Matrix& unlabeled_rows) {
  Matrix base(static_cast<Eigen::Index>(num_nodes), labeled_rows.cols());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    base.row(labeled[i]) = labeled_rows.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    base.row(unlabeled[i]) = unlabeled_rows.row(static_cast<Eigen::Index>(i));
  }
  return base;
}

// Frames at `steps` (sorted) of the propagation of `base`.
std::vector<Matrix> PropagateBlocks(const Matrix& base, const SparseOperator& op,
                                    const PropagationConfig& prop,
                                    const std::vector<std::size_t>& steps) {
  PropagationConfig local = prop;
  local.num_steps = steps.empty() ? 0 : steps.back();
  local.workers = 1;
  PredictionFrame frame;
  frame.values = base;
  std::vector<PredictionFrame> frames = Propagate(frame, op, local);
  std::vector<Matrix> blocks;
  blocks.reserve(steps.size());
  for (std::size_t t : steps) blocks.push_back(std::move(frames[t].values));
  return blocks;
}

Matrix StackBlocks(const Matrix& previous, bool keep_previous,
                   const std::vector<const std::vector<Matrix>*>& per_model) {
  Eigen::Index cols = keep_previous ? previous.cols() : 0;
  for (const auto* blocks : per_model) {
    for (const Matrix& b : *blocks) cols += b.cols();
  }
  Matrix out(previous.rows(), cols);
  Eigen::Index at = 0;
  if (keep_previous) {
    out.leftCols(previous.cols()) = previous;
    at = previous.cols();
  }
  for (const auto* blocks : per_model) {
    for (const Matrix& b : *blocks) {
      Require(b.rows() == previous.rows(), ErrorKind::kPipeline,
              "propagated block has the wrong number of rows");
      out.middleCols(at, b.cols()) = b;
      at += b.cols();
    }
  }
  return out;
}

void CheckRoster(const std::vector<ModelSpec>& roster, std::size_t layer_index) {
  Require(!roster.empty(), ErrorKind::kConfig,
          "layer " + std::to_string(layer_index) + " has an empty roster");
  std::set<std::string> tags;
  for (const auto& spec : roster) {
    Require(tags.insert(ResolvedTag(spec)).second, ErrorKind::kConfig,
            "duplicate model tag '" + ResolvedTag(spec) + "' in layer " +
                std::to_string(layer_index));
  }
}

std::map<std::string, Matrix> TopFrames(const std::vector<std::string>& tags,
                                        const std::vector<Matrix>& bases) {
  std::map<std::string, Matrix> out;
  for (std::size_t m = 0; m < tags.size(); ++m) out.emplace(tags[m], bases[m]);
  return out;
}

EnsembleWeights FitSelection(const LayerState& top, const LabelTable& labels,
                             const StackConfig& cfg,
                             const std::optional<SelectionSplit>& validation) {
  const SelectionLoss loss = ResolvedLoss(cfg, labels.task);
  std::map<std::string, Matrix> preds;
  Matrix targets;
  if (cfg.selection_set == SelectionSet::kOutOfFold) {
    for (const auto& m : top.models) preds.emplace(m.spec.tag, m.bagged.oof);
    targets = labels.TargetsFor(top.models.front().bagged.labeled_nodes).AsMatrix();
  } else {
    Require(validation.has_value() && !validation->nodes.empty(), ErrorKind::kConfig,
            "validation selection needs validation nodes");
    Require(validation->targets.size() == validation->nodes.size(), ErrorKind::kShape,
            "validation targets do not match validation nodes");
    for (NodeId v : validation->nodes) {
      Require(v < labels.num_nodes() && !labels.labeled_mask[v], ErrorKind::kConfig,
              "validation node " + std::to_string(v) + " is also a training node");
    }
    for (const auto& m : top.models) {
      Matrix rows(static_cast<Eigen::Index>(validation->nodes.size()), m.base.cols());
      for (std::size_t i = 0; i < validation->nodes.size(); ++i) {
        rows.row(static_cast<Eigen::Index>(i)) = m.base.row(validation->nodes[i]);
      }
      preds.emplace(m.spec.tag, std::move(rows));
    }
    targets = validation->targets.AsMatrix();
  }
  return SelectEnsemble(preds, targets, loss, cfg.selection_rounds);
}

}  // namespace

void StackConfig::Validate() const {
  Require(num_layers >= 1, ErrorKind::kConfig, "at least one stacking layer is required");
  Require(num_folds >= 2, ErrorKind::kConfig, "bagging needs at least 2 folds");
  Require(num_repeats >= 1, ErrorKind::kConfig, "bagging needs at least 1 repeat");
  Require(selection_rounds >= 1, ErrorKind::kConfig, "selection needs at least one round");
  propagation.Validate();
  for (std::size_t i = 0; i < step_subset.size(); ++i) {
    Require(step_subset[i] <= propagation.num_steps, ErrorKind::kConfig,
            "step " + std::to_string(step_subset[i]) + " exceeds the propagation depth");
    Require(i == 0 || step_subset[i] > step_subset[i - 1], ErrorKind::kConfig,
            "step subset must be strictly increasing");
  }
}

std::vector<std::size_t> StackConfig::Steps() const {
  if (!step_subset.empty()) return step_subset;
  std::vector<std::size_t> out(propagation.num_steps + 1);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = t;
  return out;
}

LayerState RunLayer(std::size_t layer_index, const Matrix& input,
                    const std::vector<ModelSpec>& roster, const Graph& graph,
                    const LabelTable& labels, const StackConfig& cfg, bool top) {
  const auto start = std::chrono::steady_clock::now();
  CheckRoster(roster, layer_index);
  Require(static_cast<std::size_t>(input.rows()) == graph.num_nodes() &&
              labels.num_nodes() == graph.num_nodes(),
          ErrorKind::kShape, "features, labels and graph disagree on the node count");

  const std::vector<NodeId> labeled = labels.LabeledNodes();
  const std::vector<NodeId> unlabeled = labels.UnlabeledNodes();
  const bool stratify = cfg.stratify.value_or(labels.task == Task::kClassification);
  std::optional<Targets> strata;
  if (stratify) strata = labels.TargetsFor(labeled);
  const std::uint64_t layer_seed = CombineSeed(cfg.seed, layer_index);

  LayerState state;
  state.layer_index = layer_index;
  state.input = input;
  if (cfg.shared_fold_plan) {
    state.plans.push_back(MakeFoldPlan(labeled, cfg.num_folds, cfg.num_repeats, layer_seed, strata));
  }
  const SelectionLoss loss = ResolvedLoss(cfg, labels.task);
  const Matrix targets = labels.TargetsFor(labeled).AsMatrix();

  BaggingOptions options;
  options.workers = cfg.workers;
  options.trainer = cfg.trainer;
  for (const ModelSpec& spec : roster) {
    const auto model_start = std::chrono::steady_clock::now();
    LayerModelOutput out;
    out.spec = spec;
    out.spec.tag = ResolvedTag(spec);
    if (!cfg.shared_fold_plan) {
      state.plans.push_back(MakeFoldPlan(labeled, cfg.num_folds, cfg.num_repeats,
                                         CombineSeed(layer_seed, HashString(out.spec.tag)), strata));
    }
    const FoldPlan& plan = state.plans.back();
    try {
      out.bagged = RunBaggedTraining(plan, input, labels, out.spec, unlabeled, options);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kPipeline) throw;
      Throw(ErrorKind::kPipeline, "layer " + std::to_string(layer_index) + ": " + e.what());
    }
    out.base = AssembleBase(graph.num_nodes(), labeled,
                            cfg.bagging ? out.bagged.oof : out.bagged.in_fold, unlabeled,
                            out.bagged.unlabeled);
    out.oof_loss = EvaluateLoss(out.bagged.oof, targets, loss);
    out.seconds = SecondsSince(model_start);
    state.models.push_back(std::move(out));
  }

  if (!top) {
    const SparseOperator op = BuildKernel(graph, cfg.propagation.kernel);
    const std::vector<std::size_t> steps = cfg.Steps();
    ParallelFor(state.models.size(), cfg.workers, [&](std::size_t m) {
      state.models[m].blocks = PropagateBlocks(state.models[m].base, op, cfg.propagation, steps);
    });
  }
  state.seconds = SecondsSince(start);
  return state;
}

Matrix NextLayerInput(const LayerState& state, const StackConfig& cfg) {
  std::vector<const std::vector<Matrix>*> per_model;
  for (const auto& m : state.models) per_model.push_back(&m.blocks);
  const bool keep = cfg.include_raw_features || state.layer_index > 0;
  return StackBlocks(state.input, keep, per_model);
}

PredictionFrame FinalPredictor::Predict(const Graph& graph, const Matrix& features) const {
  Require(graph.num_nodes() == num_nodes && static_cast<std::size_t>(features.rows()) == num_nodes,
          ErrorKind::kShape, "prediction data does not match the trained graph");
  Require(!layers.empty(), ErrorKind::kConfig, "predictor has no layers");
  const SparseOperator op = BuildKernel(graph, config.propagation.kernel);
  const std::vector<std::size_t> steps = config.Steps();
  Matrix input = features;
  std::vector<Matrix> bases;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const bool top = l + 1 == layers.size();
    Matrix unlabeled_x(static_cast<Eigen::Index>(unlabeled_nodes.size()), input.cols());
    for (std::size_t i = 0; i < unlabeled_nodes.size(); ++i) {
      unlabeled_x.row(static_cast<Eigen::Index>(i)) = input.row(unlabeled_nodes[i]);
    }
    bases.assign(layers[l].size(), Matrix());
    ParallelFor(layers[l].size(), config.workers, [&](std::size_t m) {
      const StackedModel& model = layers[l][m];
      const double inv = 1.0 / static_cast<double>(model.copies.size());
      Matrix mean = Matrix::Zero(unlabeled_x.rows(), static_cast<Eigen::Index>(width()));
      if (unlabeled_x.rows() > 0) {
        for (const auto& copy : model.copies) mean += inv * copy->PredictMatrix(unlabeled_x);
      }
      bases[m] = AssembleBase(num_nodes, labeled_nodes, model.labeled_base, unlabeled_nodes, mean);
    });
    if (top) break;
    std::vector<std::vector<Matrix>> blocks(layers[l].size());
    ParallelFor(layers[l].size(), config.workers, [&](std::size_t m) {
      blocks[m] = PropagateBlocks(bases[m], op, config.propagation, steps);
    });
    std::vector<const std::vector<Matrix>*> per_model;
    for (const auto& b : blocks) per_model.push_back(&b);
    input = StackBlocks(input, config.include_raw_features || l > 0, per_model);
  }
  std::vector<std::string> tags;
  for (const auto& m : layers.back()) tags.push_back(m.spec.tag);
  PredictionFrame out;
  out.values = BlendPredictions(TopFrames(tags, bases), weights);
  out.model_tag = "ensemble";
  out.is_probability = task == Task::kClassification;
  return out;
}

FinalPredictor RunPipeline(const Graph& graph, const Matrix& features, const LabelTable& labels,
                           const StackConfig& cfg,
                           const std::vector<std::vector<ModelSpec>>& rosters,
                           const std::optional<SelectionSplit>& validation) {
  cfg.Validate();
  labels.Validate();
  Require(rosters.size() == cfg.num_layers, ErrorKind::kConfig,
          "expected " + std::to_string(cfg.num_layers) + " rosters, got " +
              std::to_string(rosters.size()));
  std::size_t fits = 0;
  for (const auto& r : rosters) fits += r.size() * cfg.num_folds * cfg.num_repeats;
  Require(fits <= cfg.max_model_fits, ErrorKind::kConfig,
          "pipeline needs " + std::to_string(fits) + " model fits, limit is " +
              std::to_string(cfg.max_model_fits));
  for (std::size_t l = 0; l < rosters.size(); ++l) {
    CheckRoster(rosters[l], l);
    for (const auto& spec : rosters[l]) spec.Validate(labels.task);
  }

  FinalPredictor out;
  out.config = cfg;
  out.task = labels.task;
  out.num_classes = labels.task == Task::kRegression ? 0 : labels.num_classes;
  out.num_nodes = graph.num_nodes();
  out.labeled_nodes = labels.LabeledNodes();
  out.unlabeled_nodes = labels.UnlabeledNodes();

  Matrix input = features;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const bool top = l + 1 == cfg.num_layers;
    LayerState state = RunLayer(l, input, rosters[l], graph, labels, cfg, top);
    if (!top) input = NextLayerInput(state, cfg);
    std::vector<StackedModel> models;
    for (const auto& m : state.models) {
      StackedModel sm;
      sm.spec = m.spec;
      for (const auto& copy : m.bagged.copies) sm.copies.push_back(copy.model);
      sm.labeled_base = cfg.bagging ? m.bagged.oof : m.bagged.in_fold;
      models.push_back(std::move(sm));
    }
    out.layers.push_back(std::move(models));
    out.states.push_back(std::move(state));
  }

  const LayerState& top = out.states.back();
  out.weights = FitSelection(top, labels, cfg, validation);
  std::vector<std::string> tags;
  std::vector<Matrix> bases;
  for (const auto& m : top.models) {
    tags.push_back(m.spec.tag);
    bases.push_back(m.base);
  }
  out.output.values = BlendPredictions(TopFrames(tags, bases), out.weights);
  out.output.model_tag = "ensemble";
  out.output.is_probability = labels.task == Task::kClassification;
  return out;
}

std::vector<AblationRow> RunAblation(const Graph& graph, const Matrix& features,
                                     const LabelTable& labels, const StackConfig& cfg,
                                     const std::vector<std::vector<ModelSpec>>& rosters,
                                     const std::vector<std::size_t>& step_values,
                                     const std::vector<bool>& bagging_modes,
                                     const std::vector<std::uint64_t>& seeds,
                                     const LabelTable& truth, const std::vector<NodeId>& eval_nodes,
                                     Metric metric) {
  Require(!step_values.empty(), ErrorKind::kConfig, "ablation needs at least one step value");
  Require(!bagging_modes.empty() && !seeds.empty(), ErrorKind::kConfig,
          "ablation needs at least one mode and one seed");
  Require(cfg.num_layers >= 2, ErrorKind::kConfig,
          "ablation needs at least two layers; a single layer never propagates");
  Require(rosters.size() == cfg.num_layers, ErrorKind::kConfig, "one roster per layer required");
  const std::size_t max_steps = *std::max_element(step_values.begin(), step_values.end());

  std::vector<AblationRow> rows;
  for (std::size_t t : step_values) {
    for (bool mode : bagging_modes) {
      AblationRow row;
      row.steps = t;
      row.bagging = mode;
      rows.push_back(row);
    }
  }

  for (std::uint64_t seed : seeds) {
    StackConfig base_cfg = cfg;
    base_cfg.seed = seed;
    base_cfg.step_subset.clear();
    base_cfg.propagation.num_steps = max_steps;
    base_cfg.Validate();
    const LayerState first = RunLayer(0, features, rosters[0], graph, labels, base_cfg, true);
    const SparseOperator op = BuildKernel(graph, cfg.propagation.kernel);
    const std::vector<NodeId> labeled = labels.LabeledNodes();
    const std::vector<NodeId> unlabeled = labels.UnlabeledNodes();
    std::vector<std::size_t> all_steps(max_steps + 1);
    for (std::size_t t = 0; t <= max_steps; ++t) all_steps[t] = t;

    for (bool mode : bagging_modes) {
      std::vector<std::vector<Matrix>> frames(first.models.size());
      ParallelFor(first.models.size(), cfg.workers, [&](std::size_t m) {
        const OOFMatrix& bagged = first.models[m].bagged;
        const Matrix base = AssembleBase(graph.num_nodes(), labeled,
                                         mode ? bagged.oof : bagged.in_fold, unlabeled,
                                         bagged.unlabeled);
        frames[m] = PropagateBlocks(base, op, base_cfg.propagation, all_steps);
      });
      for (std::size_t t : step_values) {
        StackConfig run_cfg = base_cfg;
        run_cfg.bagging = mode;
        run_cfg.propagation.num_steps = t;
        std::vector<std::vector<Matrix>> blocks(frames.size());
        std::vector<const std::vector<Matrix>*> per_model;
        for (std::size_t m = 0; m < frames.size(); ++m) {
          blocks[m].assign(frames[m].begin(), frames[m].begin() + static_cast<std::ptrdiff_t>(t + 1));
          per_model.push_back(&blocks[m]);
        }
        Matrix input = StackBlocks(features, cfg.include_raw_features, per_model);
        LayerState state;
        for (std::size_t l = 1; l < cfg.num_layers; ++l) {
          const bool top = l + 1 == cfg.num_layers;
          state = RunLayer(l, input, rosters[l], graph, labels, run_cfg, top);
          if (!top) input = NextLayerInput(state, run_cfg);
        }
        const EnsembleWeights weights = FitSelection(state, labels, run_cfg, std::nullopt);
        std::map<std::string, Matrix> top_frames;
        for (const auto& m : state.models) top_frames.emplace(m.spec.tag, m.base);
        const Matrix preds = BlendPredictions(top_frames, weights);
        const double value = EvaluateMetric(preds, truth, eval_nodes, metric);
        for (auto& row : rows) {
          if (row.steps == t && row.bagging == mode) row.values.push_back(value);
        }
      }
    }
  }

  for (auto& row : rows) {
    double sum = 0.0;
    for (double v : row.values) sum += v;
    row.mean = sum / static_cast<double>(row.values.size());
    double sq = 0.0;
    for (double v : row.values) sq += (v - row.mean) * (v - row.mean);
    row.stddev = std::sqrt(sq / static_cast<double>(row.values.size()));
  }
  return rows;
}

}  // namespace stackprop
