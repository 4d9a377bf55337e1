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

#ifndef STACKPROP_LEAKAGE_LAB_HPP_
#define STACKPROP_LEAKAGE_LAB_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "stackprop/graph.hpp"
#include "stackprop/models.hpp"
#include "stackprop/types.hpp"

namespace stackprop {

// Gaussian Markov random field with precision gmrf_alpha I + beta N, where N
// is the symmetric normalized Laplacian. Dense; limited to
// kDenseOracleMaxNodes nodes.
class GmrfModel {
 public:
  GmrfModel(const Graph& graph, double gmrf_alpha, double beta);

  const Graph& graph() const { return graph_; }
  double gmrf_alpha() const { return gmrf_alpha_; }
  double beta() const { return beta_; }
  std::size_t size() const { return graph_.num_nodes(); }
  const Matrix& precision() const { return precision_; }
  // Lower-triangular L with L L^T = precision.
  Matrix factor() const { return Matrix(llt_.matrixL()); }
  Matrix Covariance() const;

 private:
  Graph graph_;
  double gmrf_alpha_;
  double beta_;
  Matrix precision_;
  Eigen::LLT<Matrix> llt_;
};

// num_samples x n matrix; each row is one draw x = L^{-T} z, z standard normal.
Matrix SampleGmrf(const GmrfModel& model, std::size_t num_samples, std::uint64_t seed);

struct ConditionalLaw {
  std::vector<NodeId> free_nodes;  // ascending
  Vector mean;
  Matrix covariance;
};

// Law of the nodes outside `observed` given their values:
// mean -Gamma_QQ^{-1} Gamma_QP x_P, covariance Gamma_QQ^{-1}.
ConditionalLaw ConditionalGaussian(const GmrfModel& model, const std::vector<NodeId>& observed,
                                   const Vector& observed_values);

// Draws `count` rows from N(mean, covariance) given its lower Cholesky factor.
Matrix SampleConditional(const ConditionalLaw& law, std::size_t count, std::uint64_t seed);

// Base learner used by the functionals: either a trained regression model,
// or the fixed linear map x -> sum(x) that ignores its training chunk.
struct LabModel {
  bool identity = true;
  ModelSpec spec;

  static LabModel Identity() { return {}; }
  static LabModel Trained(ModelSpec spec) { return {false, std::move(spec)}; }
};

// Features (n x p) and regression labels (NaN when unknown) of a graph with
// two disjoint labeled chunks.
struct ChunkedDataset {
  Matrix features;
  std::vector<double> labels;
  std::vector<NodeId> chunk1;
  std::vector<NodeId> chunk2;

  void Validate(std::size_t num_nodes) const;
};

struct FunctionalValue {
  double value = 0.0;
  bool no_labeled_neighbors = false;
};

// Sum over x0's chunk-1 neighbors of m(x_v; theta(chunk2)) plus the sum over
// its chunk-2 neighbors of m(x_w; theta(chunk1)).
FunctionalValue BaggedFunctional(NodeId x0, const ChunkedDataset& data, const Graph& graph,
                                 const LabModel& model);

// As BaggedFunctional with each neighbor scored by the model of its own chunk.
FunctionalValue UnbaggedFunctional(NodeId x0, const ChunkedDataset& data, const Graph& graph,
                                   const LabModel& model);

// Renyi divergence of the given order between N(mean_p, var_p) and
// N(mean_q, var_q). Infinite when the mixed variance is not positive.
double GaussianRenyiDivergence(double order, double mean_p, double var_p, double mean_q,
                               double var_q);

enum class BoundVariance {
  kMinDiagonal,  // smallest conditional variance of a chunk-2 node
  kMaxDiagonal,  // largest conditional variance of a chunk-2 node
};

struct LeakageExperimentConfig {
  NodeId x0 = 0;
  std::vector<NodeId> chunk1;
  std::vector<NodeId> chunk2;
  NodeId removed = 0;  // member of chunk1
  LabModel model;
  double order_a = 2.0;
  std::size_t trials = 4000;
  std::uint64_t seed = 0;
  std::size_t num_features = 1;
  double label_weight = 1.0;
  double label_noise = 0.1;
  // Outputs are clipped to [-clip, clip] when set.
  std::optional<double> clip = 0.5;
  BoundVariance bound_variance = BoundVariance::kMinDiagonal;
  std::size_t workers = 1;

  void Validate(std::size_t num_nodes) const;
};

struct LeakageReport {
  double epsilon_hat = 0.0;
  double epsilon_bound = 0.0;
  double sigma_sq = 0.0;
  std::vector<double> conditional_variances;  // diagonal of Gamma_ww^{-1}, chunk2 order
  double unbagged_gap = 0.0;
  double mean_full = 0.0;
  double var_full = 0.0;
  double mean_reduced = 0.0;
  double var_reduced = 0.0;
  double max_output_difference = 0.0;
  bool degenerate = false;
  std::vector<double> outputs_full;
  std::vector<double> outputs_reduced;
};

// Draws base features from the field and labels y = x w + noise. Each trial
// resamples chunk-2 features (and their labels) from the conditional law
// given every other node, evaluates the bagged functional with and without
// the removed record, and fits Gaussians to both output samples.
LeakageReport RunLeakageExperiment(const GmrfModel& gmrf, const LeakageExperimentConfig& cfg);

struct LeakageInstance {
  Graph graph;
  NodeId x0 = 0;
  std::vector<NodeId> chunk1;
  std::vector<NodeId> chunk2;
  NodeId removed = 0;
};

// Random connected graph where x0 is unlabeled with neighbors in both chunks
// and the removed record is a chunk-1 neighbor of x0.
LeakageInstance MakeLeakageInstance(std::size_t num_nodes, double edge_prob, std::uint64_t seed);

}  // namespace stackprop

#endif  // STACKPROP_LEAKAGE_LAB_HPP_
