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

#ifndef STACKPROP_GRAPH_HPP_
#define STACKPROP_GRAPH_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stackprop/types.hpp"

namespace stackprop {

using Edge = std::pair<NodeId, NodeId>;

// Immutable simple undirected graph in compressed sparse row form.
//
// Construction symmetrizes directed input, merges duplicate edges and drops
// self-loops, so every stored row is strictly increasing and the adjacency
// is symmetric.
class Graph {
 public:
  Graph() = default;

  static Graph FromEdges(std::size_t num_nodes, std::span<const Edge> edges);

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  // Number of undirected edges.
  std::size_t num_edges() const { return columns_.size() / 2; }

  std::span<const NodeId> neighbors(NodeId node) const {
    return {columns_.data() + offsets_[node], columns_.data() + offsets_[node + 1]};
  }
  std::size_t degree(NodeId node) const { return offsets_[node + 1] - offsets_[node]; }
  bool HasEdge(NodeId u, NodeId v) const;

  const std::vector<std::size_t>& row_offsets() const { return offsets_; }
  const std::vector<NodeId>& column_indices() const { return columns_; }

  // Each undirected edge once, as (u, v) with u < v, in row order.
  std::vector<Edge> EdgeList() const;

  // Subgraph induced by `nodes`; node i of the result is nodes[i].
  Graph InducedSubgraph(std::span<const NodeId> nodes) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> columns_;
};

enum class KernelKind {
  kCombinatorialLaplacian,  // D - A
  kSymNormAdjacency,        // D^{-1/2} A D^{-1/2}  ("DAD")
  kRowNormAdjacency,        // D^{-1} A            ("DA")
  kColNormAdjacency,        // A D^{-1}            ("AD")
  kSymNormLaplacian,        // I - D^{-1/2} A D^{-1/2}
};

enum class IsolatedNodePolicy { kIdentityRow, kZeroRow };

struct KernelSpec {
  KernelKind kind = KernelKind::kSymNormAdjacency;
  IsolatedNodePolicy isolated = IsolatedNodePolicy::kIdentityRow;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

// Accepts the long names ("sym_norm_adjacency") and the short C&S names
// ("DAD", "DA", "AD", "L"). Throws ErrorKind::kConfig otherwise.
KernelKind ParseKernelKind(const std::string& name);
std::string KernelKindName(KernelKind kind);
IsolatedNodePolicy ParseIsolatedNodePolicy(const std::string& name);
std::string IsolatedNodePolicyName(IsolatedNodePolicy policy);

// A realized kernel: square CSR matrix, entries of each row in ascending
// column order (diagonal included where nonzero).
class SparseOperator {
 public:
  SparseOperator() = default;
  SparseOperator(std::size_t size, KernelSpec spec, std::vector<std::size_t> offsets,
                 std::vector<NodeId> columns, std::vector<double> values);

  std::size_t size() const { return size_; }
  const KernelSpec& spec() const { return spec_; }
  const std::vector<std::size_t>& row_offsets() const { return offsets_; }
  const std::vector<NodeId>& column_indices() const { return columns_; }
  const std::vector<double>& values() const { return values_; }

  // out = K * in. Rows are processed in parallel; each output entry is
  // accumulated in ascending column order so the result is independent of
  // the worker count.
  void Apply(const Matrix& in, Matrix& out, std::size_t workers = 1) const;
  Matrix Apply(const Matrix& in, std::size_t workers = 1) const;

  Matrix ToDense() const;

 private:
  std::size_t size_ = 0;
  KernelSpec spec_;
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> columns_;
  std::vector<double> values_;
};

SparseOperator BuildKernel(const Graph& graph, const KernelSpec& spec);

// Per-node predictions of one model at one smoothing depth.
struct PredictionFrame {
  Matrix values;
  std::size_t depth = 0;
  std::string model_tag;
  bool is_probability = false;
};

struct PropagationConfig {
  double lambda = 0.9;
  std::size_t num_steps = 4;
  double step_alpha = 0.1;  // gradient-iteration variant only
  KernelSpec kernel;
  std::size_t max_steps = 200;
  std::size_t workers = 1;

  void Validate() const;
};

// F^(t) = (1 - lambda) F^(0) + lambda K F^(t-1), t = 1..T. Returns the T+1
// frames F^(0)..F^(T); frame 0 is the input unchanged.
std::vector<PredictionFrame> Propagate(const PredictionFrame& frame, const SparseOperator& op,
                                       const PropagationConfig& cfg);

// The same recurrence without frame bookkeeping; returns only F^(steps).
// Accepts lambda in [0, 1].
Matrix SmoothToDepth(const Matrix& base, const SparseOperator& op, double lambda,
                     std::size_t steps, std::size_t workers = 1);

// One descent step on the smoothing energy:
//   Y - alpha [(lambda L + I) Y - target]
// `laplacian` must be a combinatorial Laplacian.
Matrix GradientStep(const Matrix& y, const Matrix& target, const SparseOperator& laplacian,
                    double lambda, double step_alpha);

// Nodes above which the dense solve refuses to run.
inline constexpr std::size_t kDenseOracleMaxNodes = 2000;

// (I + lambda L)^{-1} target by dense factorization. Test oracle only.
Matrix ClosedFormSolve(const Matrix& target, const Graph& graph, double lambda);

// Weight on the fidelity term of the smoothing energy.
enum class FidelityWeight {
  kOneMinusLambda,  // (1 - lambda) ||Y - target||^2 + lambda tr(Y^T L Y)
  kUnit,            // ||Y - target||^2 + lambda tr(Y^T L Y); GradientStep and
                    // ClosedFormSolve descend and minimize this form
};

double Energy(const Matrix& y, const Matrix& target, const Graph& graph, double lambda,
              FidelityWeight weight = FidelityWeight::kOneMinusLambda);

// Largest eigenvalue of the combinatorial Laplacian (dense; small graphs).
double LaplacianSpectralRadius(const Graph& graph);

}  // namespace stackprop

#endif  // STACKPROP_GRAPH_HPP_
