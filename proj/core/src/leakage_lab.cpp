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

#include "stackprop/leakage_lab.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "stackprop/error.hpp"
#include "stackprop/parallel.hpp"
#include "stackprop/rng.hpp"

namespace stackprop {

namespace {

Matrix StandardNormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix z(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = rng.Normal();
  }
  return z;
}

std::vector<bool> Membership(std::size_t n, const std::vector<NodeId>& nodes) {
  std::vector<bool> in(n, false);
  for (NodeId v : nodes) in[v] = true;
  return in;
}

using Scorer = std::function<double(const Matrix& features, NodeId node)>;

Scorer MakeScorer(const LabModel& model, const Matrix& features, const std::vector<double>& labels,
                  const std::vector<NodeId>& chunk) {
  if (model.identity) {
    return [](const Matrix& x, NodeId v) { return x.row(v).sum(); };
  }
  Matrix rows(static_cast<Eigen::Index>(chunk.size()), features.cols());
  Targets y;
  y.task = Task::kRegression;
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = features.row(chunk[i]);
    y.values.push_back(labels[chunk[i]]);
  }
  ModelPtr fitted = Train(model.spec, rows, y);
  return [fitted](const Matrix& x, NodeId v) {
    return fitted->PredictMatrix(x.row(v))(0, 0);
  };
}

// Neighbors of x0 in chunk 1 are scored by `first`, those in chunk 2 by
// `second`.
FunctionalValue Combine(NodeId x0, const Graph& graph, const Matrix& features,
                        const std::vector<bool>& in1, const std::vector<bool>& in2,
                        const Scorer& first, const Scorer& second) {
  FunctionalValue out;
  bool any = false;
  for (NodeId u : graph.neighbors(x0)) {
    if (in1[u]) {
      out.value += first(features, u);
      any = true;
    } else if (in2[u]) {
      out.value += second(features, u);
      any = true;
    }
  }
  out.no_labeled_neighbors = !any;
  if (!any) out.value = 0.0;
  return out;
}

FunctionalValue Functional(NodeId x0, const ChunkedDataset& data, const Graph& graph,
                           const LabModel& model, bool crossed) {
  data.Validate(graph.num_nodes());
  Require(x0 < graph.num_nodes(), ErrorKind::kConfig, "x0 is not a node of the graph");
  const std::size_t n = graph.num_nodes();
  const auto in1 = Membership(n, data.chunk1);
  const auto in2 = Membership(n, data.chunk2);
  Require(!in1[x0] && !in2[x0], ErrorKind::kConfig, "x0 must be unlabeled");
  const Scorer theta1 = MakeScorer(model, data.features, data.labels, data.chunk1);
  const Scorer theta2 = MakeScorer(model, data.features, data.labels, data.chunk2);
  return crossed ? Combine(x0, graph, data.features, in1, in2, theta2, theta1)
                 : Combine(x0, graph, data.features, in1, in2, theta1, theta2);
}

double Clip(double value, const std::optional<double>& clip) {
  return clip ? std::clamp(value, -*clip, *clip) : value;
}

void MeanVariance(const std::vector<double>& values, double& mean, double& var) {
  mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size() - 1);
}

}  // namespace

GmrfModel::GmrfModel(const Graph& graph, double gmrf_alpha, double beta)
    : graph_(graph), gmrf_alpha_(gmrf_alpha), beta_(beta) {
  Require(std::isfinite(gmrf_alpha) && gmrf_alpha > 0.0, ErrorKind::kConfig,
          "gmrf_alpha must be positive");
  Require(std::isfinite(beta) && beta >= 0.0, ErrorKind::kConfig, "beta must be non-negative");
  Require(graph.num_nodes() >= 1, ErrorKind::kConfig, "field needs at least one node");
  Require(graph.num_nodes() <= kDenseOracleMaxNodes, ErrorKind::kSize,
          "field over " + std::to_string(graph.num_nodes()) + " nodes exceeds the dense limit");
  const Matrix normalized =
      BuildKernel(graph, {KernelKind::kSymNormLaplacian, IsolatedNodePolicy::kZeroRow}).ToDense();
  const auto n = static_cast<Eigen::Index>(graph.num_nodes());
  precision_ = gmrf_alpha * Matrix::Identity(n, n) + beta * normalized;
  llt_.compute(precision_);
  Require(llt_.info() == Eigen::Success, ErrorKind::kNumeric,
          "precision matrix is not positive definite");
}

Matrix GmrfModel::Covariance() const {
  return llt_.solve(Matrix::Identity(precision_.rows(), precision_.cols()));
}

Matrix SampleGmrf(const GmrfModel& model, std::size_t num_samples, std::uint64_t seed) {
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(model.size());
  Matrix z = StandardNormal(n, static_cast<Eigen::Index>(num_samples), rng);
  const Matrix lower = model.factor();
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(z);
  return z.transpose();
}

ConditionalLaw ConditionalGaussian(const GmrfModel& model, const std::vector<NodeId>& observed,
                                   const Vector& observed_values) {
  const std::size_t n = model.size();
  Require(!observed.empty() && observed.size() < n, ErrorKind::kConfig,
          "observed set must be a nonempty proper subset");
  Require(static_cast<std::size_t>(observed_values.size()) == observed.size(), ErrorKind::kShape,
          "one observed value per observed node required");
  std::vector<bool> seen(n, false);
  for (NodeId v : observed) {
    Require(v < n && !seen[v], ErrorKind::kConfig, "observed nodes must be distinct graph nodes");
    seen[v] = true;
  }
  ConditionalLaw law;
  for (NodeId v = 0; v < n; ++v) {
    if (!seen[v]) law.free_nodes.push_back(v);
  }
  const auto q = static_cast<Eigen::Index>(law.free_nodes.size());
  const auto p = static_cast<Eigen::Index>(observed.size());
  const Matrix& gamma = model.precision();
  Matrix gamma_qq(q, q);
  Matrix gamma_qp(q, p);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = 0; j < q; ++j) gamma_qq(i, j) = gamma(law.free_nodes[i], law.free_nodes[j]);
    for (Eigen::Index j = 0; j < p; ++j) gamma_qp(i, j) = gamma(law.free_nodes[i], observed[j]);
  }
  Eigen::LLT<Matrix> llt(gamma_qq);
  Require(llt.info() == Eigen::Success, ErrorKind::kNumeric, "conditional precision is singular");
  law.mean = -llt.solve(gamma_qp * observed_values);
  law.covariance = llt.solve(Matrix::Identity(q, q));
  return law;
}

Matrix SampleConditional(const ConditionalLaw& law, std::size_t count, std::uint64_t seed) {
  Eigen::LLT<Matrix> llt(law.covariance);
  Require(llt.info() == Eigen::Success, ErrorKind::kNumeric,
          "conditional covariance is not positive definite");
  Rng rng(seed);
  const Matrix z = StandardNormal(law.mean.size(), static_cast<Eigen::Index>(count), rng);
  Matrix draws = llt.matrixL() * z;
  draws.colwise() += law.mean;
  return draws.transpose();
}

void ChunkedDataset::Validate(std::size_t num_nodes) const {
  Require(static_cast<std::size_t>(features.rows()) == num_nodes && labels.size() == num_nodes,
          ErrorKind::kShape, "dataset does not cover the graph");
  std::vector<int> owner(num_nodes, 0);
  for (NodeId v : chunk1) {
    Require(v < num_nodes && owner[v] == 0, ErrorKind::kConfig, "chunk 1 has an invalid node");
    owner[v] = 1;
  }
  for (NodeId v : chunk2) {
    Require(v < num_nodes && owner[v] == 0, ErrorKind::kConfig, "chunks must be disjoint");
    owner[v] = 2;
  }
  Require(!chunk1.empty() && !chunk2.empty(), ErrorKind::kConfig, "both chunks must be nonempty");
}

FunctionalValue BaggedFunctional(NodeId x0, const ChunkedDataset& data, const Graph& graph,
                                 const LabModel& model) {
  return Functional(x0, data, graph, model, true);
}

FunctionalValue UnbaggedFunctional(NodeId x0, const ChunkedDataset& data, const Graph& graph,
                                   const LabModel& model) {
  return Functional(x0, data, graph, model, false);
}

double GaussianRenyiDivergence(double order, double mean_p, double var_p, double mean_q,
                               double var_q) {
  Require(order > 1.0, ErrorKind::kConfig, "Renyi order must exceed 1");
  Require(var_p > 0.0 && var_q > 0.0, ErrorKind::kData, "variances must be positive");
  const double mixed = order * var_q + (1.0 - order) * var_p;
  if (mixed <= 0.0) return std::numeric_limits<double>::infinity();
  const double diff = mean_p - mean_q;
  const double value = 0.5 * std::log(var_q / var_p) +
                       std::log(var_q / mixed) / (2.0 * (order - 1.0)) +
                       order * diff * diff / (2.0 * mixed);
  return std::max(0.0, value);
}

void LeakageExperimentConfig::Validate(std::size_t num_nodes) const {
  Require(order_a > 1.0, ErrorKind::kConfig, "Renyi order must exceed 1");
  Require(trials >= 2, ErrorKind::kConfig, "at least two trials are required");
  Require(num_features >= 1, ErrorKind::kConfig, "at least one feature is required");
  Require(!clip || *clip > 0.0, ErrorKind::kConfig, "clip must be positive");
  Require(x0 < num_nodes, ErrorKind::kConfig, "x0 is not a node of the graph");
  Require(std::find(chunk1.begin(), chunk1.end(), removed) != chunk1.end(), ErrorKind::kConfig,
          "the removed record must belong to chunk 1");
  Require(chunk1.size() >= 2, ErrorKind::kConfig, "chunk 1 needs a record besides the removed one");
  Require(std::find(chunk1.begin(), chunk1.end(), x0) == chunk1.end() &&
              std::find(chunk2.begin(), chunk2.end(), x0) == chunk2.end(),
          ErrorKind::kConfig, "x0 must be unlabeled");
  if (!model.identity) model.spec.Validate(Task::kRegression);
}

LeakageReport RunLeakageExperiment(const GmrfModel& gmrf, const LeakageExperimentConfig& cfg) {
  const Graph& graph = gmrf.graph();
  const std::size_t n = graph.num_nodes();
  cfg.Validate(n);
  const auto p = static_cast<Eigen::Index>(cfg.num_features);

  // Base draw: one field sample per feature column, labels y = x w + noise.
  ChunkedDataset full;
  full.features = SampleGmrf(gmrf, cfg.num_features, CombineSeed(cfg.seed, 0)).transpose();
  full.chunk1 = cfg.chunk1;
  full.chunk2 = cfg.chunk2;
  Rng noise_rng(CombineSeed(cfg.seed, 1));
  std::vector<double> noise(n);
  for (auto& e : noise) e = cfg.label_noise * noise_rng.Normal();
  auto label_of = [&](const Matrix& x, NodeId v) {
    return cfg.label_weight * x.row(v).sum() + noise[v];
  };
  full.labels.assign(n, std::numeric_limits<double>::quiet_NaN());
  for (NodeId v : full.chunk1) full.labels[v] = label_of(full.features, v);
  for (NodeId v : full.chunk2) full.labels[v] = label_of(full.features, v);
  full.Validate(n);

  ChunkedDataset reduced = full;
  reduced.chunk1.erase(std::find(reduced.chunk1.begin(), reduced.chunk1.end(), cfg.removed));
  reduced.labels[cfg.removed] = std::numeric_limits<double>::quiet_NaN();

  LeakageReport report;
  report.unbagged_gap = std::abs(UnbaggedFunctional(cfg.x0, full, graph, cfg.model).value -
                                 UnbaggedFunctional(cfg.x0, reduced, graph, cfg.model).value);

  // Chunk-2 features given every other node.
  std::vector<NodeId> observed;
  const auto in2 = Membership(n, cfg.chunk2);
  for (NodeId v = 0; v < n; ++v) {
    if (!in2[v]) observed.push_back(v);
  }
  std::vector<ConditionalLaw> laws;
  for (Eigen::Index j = 0; j < p; ++j) {
    Vector values(static_cast<Eigen::Index>(observed.size()));
    for (std::size_t i = 0; i < observed.size(); ++i) {
      values(static_cast<Eigen::Index>(i)) = full.features(observed[i], j);
    }
    laws.push_back(ConditionalGaussian(gmrf, observed, values));
  }
  // free_nodes is ascending; report the diagonal in chunk-2 order.
  const ConditionalLaw& law = laws.front();
  for (NodeId w : cfg.chunk2) {
    const auto at = std::lower_bound(law.free_nodes.begin(), law.free_nodes.end(), w) -
                    law.free_nodes.begin();
    report.conditional_variances.push_back(law.covariance(at, at));
  }
  report.sigma_sq = cfg.bound_variance == BoundVariance::kMinDiagonal
                        ? *std::min_element(report.conditional_variances.begin(),
                                            report.conditional_variances.end())
                        : *std::max_element(report.conditional_variances.begin(),
                                            report.conditional_variances.end());
  report.epsilon_bound = cfg.order_a / (2.0 * report.sigma_sq);

  const std::size_t trials = cfg.trials;
  std::vector<Matrix> draws;
  for (Eigen::Index j = 0; j < p; ++j) {
    draws.push_back(SampleConditional(laws[static_cast<std::size_t>(j)], trials,
                                      CombineSeed(cfg.seed, 2 + static_cast<std::uint64_t>(j))));
  }

  // theta(chunk1) does not depend on the resampled block.
  const auto in1_full = Membership(n, full.chunk1);
  const auto in1_reduced = Membership(n, reduced.chunk1);
  const Scorer theta1_full = MakeScorer(cfg.model, full.features, full.labels, full.chunk1);
  const Scorer theta1_reduced =
      MakeScorer(cfg.model, reduced.features, reduced.labels, reduced.chunk1);

  report.outputs_full.assign(trials, 0.0);
  report.outputs_reduced.assign(trials, 0.0);
  ParallelFor(trials, cfg.workers, [&](std::size_t t) {
    Matrix x = full.features;
    std::vector<double> labels = full.labels;
    for (std::size_t i = 0; i < law.free_nodes.size(); ++i) {
      const NodeId w = law.free_nodes[i];
      for (Eigen::Index j = 0; j < p; ++j) {
        x(w, j) = draws[static_cast<std::size_t>(j)](static_cast<Eigen::Index>(t),
                                                    static_cast<Eigen::Index>(i));
      }
      labels[w] = label_of(x, w);
    }
    const Scorer theta2 = MakeScorer(cfg.model, x, labels, cfg.chunk2);
    report.outputs_full[t] =
        Clip(Combine(cfg.x0, graph, x, in1_full, in2, theta2, theta1_full).value, cfg.clip);
    report.outputs_reduced[t] =
        Clip(Combine(cfg.x0, graph, x, in1_reduced, in2, theta2, theta1_reduced).value, cfg.clip);
  });

  for (std::size_t t = 0; t < trials; ++t) {
    report.max_output_difference = std::max(
        report.max_output_difference, std::abs(report.outputs_full[t] - report.outputs_reduced[t]));
  }
  MeanVariance(report.outputs_full, report.mean_full, report.var_full);
  MeanVariance(report.outputs_reduced, report.mean_reduced, report.var_reduced);
  constexpr double kTinyVariance = 1e-18;
  if (report.var_full <= kTinyVariance || report.var_reduced <= kTinyVariance) {
    report.degenerate = true;
    const bool same = report.mean_full == report.mean_reduced &&
                      report.var_full == report.var_reduced;
    report.epsilon_hat = same ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    report.epsilon_hat = GaussianRenyiDivergence(cfg.order_a, report.mean_full, report.var_full,
                                                 report.mean_reduced, report.var_reduced);
    report.degenerate = !std::isfinite(report.epsilon_hat);
  }
  return report;
}

LeakageInstance MakeLeakageInstance(std::size_t num_nodes, double edge_prob, std::uint64_t seed) {
  Require(num_nodes >= 5, ErrorKind::kConfig, "leakage instances need at least 5 nodes");
  Require(edge_prob > 0.0 && edge_prob <= 1.0, ErrorKind::kConfig, "edge_prob must lie in (0, 1]");
  Rng rng(seed);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<Edge> edges;
    for (NodeId u = 0; u < num_nodes; ++u) {
      for (NodeId v = u + 1; v < num_nodes; ++v) {
        if (rng.Uniform01() < edge_prob) edges.emplace_back(u, v);
      }
    }
    Graph graph = Graph::FromEdges(num_nodes, edges);
    // Connectivity by breadth-first search from node 0.
    std::vector<bool> reached(num_nodes, false);
    std::vector<NodeId> queue{0};
    reached[0] = true;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      for (NodeId u : graph.neighbors(queue[head])) {
        if (!reached[u]) {
          reached[u] = true;
          queue.push_back(u);
        }
      }
    }
    if (queue.size() != num_nodes) continue;

    const auto x0 = static_cast<NodeId>(rng.UniformIndex(num_nodes));
    if (graph.degree(x0) < 2) continue;
    LeakageInstance inst;
    inst.x0 = x0;
    for (NodeId v = 0; v < num_nodes; ++v) {
      if (v == x0) continue;
      (rng.Uniform01() < 0.5 ? inst.chunk1 : inst.chunk2).push_back(v);
    }
    std::vector<NodeId> near1;
    bool near2 = false;
    for (NodeId u : graph.neighbors(x0)) {
      if (std::find(inst.chunk1.begin(), inst.chunk1.end(), u) != inst.chunk1.end()) {
        near1.push_back(u);
      } else {
        near2 = true;
      }
    }
    if (near1.empty() || !near2 || inst.chunk1.size() < 3 || inst.chunk2.size() < 2) continue;
    inst.removed = near1[rng.UniformIndex(near1.size())];
    inst.graph = std::move(graph);
    return inst;
  }
  Throw(ErrorKind::kConfig, "could not build a leakage instance with these parameters");
}

}  // namespace stackprop
