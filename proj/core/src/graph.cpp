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

#include "stackprop/graph.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "stackprop/error.hpp"
#include "stackprop/parallel.hpp"

namespace stackprop {

Graph Graph::FromEdges(std::size_t num_nodes, std::span<const Edge> edges) {
  std::vector<Edge> directed;
  directed.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    Require(u < num_nodes && v < num_nodes, ErrorKind::kIntegrity,
            "edge (" + std::to_string(u) + ", " + std::to_string(v) +
                ") references a node outside [0, " + std::to_string(num_nodes) + ")");
    if (u == v) continue;
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());

  Graph g;
  g.offsets_.assign(num_nodes + 1, 0);
  g.columns_.reserve(directed.size());
  for (const auto& [u, v] : directed) {
    ++g.offsets_[u + 1];
    g.columns_.push_back(v);
  }
  for (std::size_t i = 0; i < num_nodes; ++i) g.offsets_[i + 1] += g.offsets_[i];
  return g;
}

bool Graph::HasEdge(NodeId u, NodeId v) const {
  const auto row = neighbors(u);
  return std::binary_search(row.begin(), row.end(), v);
}

std::vector<Edge> Graph::EdgeList() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (NodeId u = 0; u < num_nodes(); ++u) {
    for (NodeId v : neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

Graph Graph::InducedSubgraph(std::span<const NodeId> nodes) const {
  std::vector<std::int64_t> local(num_nodes(), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) local[nodes[i]] = static_cast<std::int64_t>(i);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (NodeId v : neighbors(nodes[i])) {
      if (local[v] > static_cast<std::int64_t>(i)) {
        edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(local[v]));
      }
    }
  }
  return FromEdges(nodes.size(), edges);
}

KernelKind ParseKernelKind(const std::string& name) {
  if (name == "combinatorial_laplacian" || name == "L") return KernelKind::kCombinatorialLaplacian;
  if (name == "sym_norm_adjacency" || name == "DAD") return KernelKind::kSymNormAdjacency;
  if (name == "row_norm_adjacency" || name == "DA") return KernelKind::kRowNormAdjacency;
  if (name == "col_norm_adjacency" || name == "AD") return KernelKind::kColNormAdjacency;
  if (name == "sym_norm_laplacian" || name == "N") return KernelKind::kSymNormLaplacian;
  Throw(ErrorKind::kConfig, "unknown kernel kind '" + name + "'");
}

std::string KernelKindName(KernelKind kind) {
  switch (kind) {
    case KernelKind::kCombinatorialLaplacian: return "combinatorial_laplacian";
    case KernelKind::kSymNormAdjacency: return "sym_norm_adjacency";
    case KernelKind::kRowNormAdjacency: return "row_norm_adjacency";
    case KernelKind::kColNormAdjacency: return "col_norm_adjacency";
    case KernelKind::kSymNormLaplacian: return "sym_norm_laplacian";
  }
  Throw(ErrorKind::kConfig, "unknown kernel kind");
}

IsolatedNodePolicy ParseIsolatedNodePolicy(const std::string& name) {
  if (name == "identity_row") return IsolatedNodePolicy::kIdentityRow;
  if (name == "zero_row") return IsolatedNodePolicy::kZeroRow;
  Throw(ErrorKind::kConfig, "unknown isolated node policy '" + name + "'");
}

std::string IsolatedNodePolicyName(IsolatedNodePolicy policy) {
  return policy == IsolatedNodePolicy::kIdentityRow ? "identity_row" : "zero_row";
}

SparseOperator::SparseOperator(std::size_t size, KernelSpec spec,
                               std::vector<std::size_t> offsets, std::vector<NodeId> columns,
                               std::vector<double> values)
    : size_(size),
      spec_(spec),
      offsets_(std::move(offsets)),
      columns_(std::move(columns)),
      values_(std::move(values)) {
  Require(offsets_.size() == size_ + 1 && columns_.size() == values_.size() &&
              offsets_.back() == columns_.size(),
          ErrorKind::kShape, "inconsistent CSR arrays");
}

void SparseOperator::Apply(const Matrix& in, Matrix& out, std::size_t workers) const {
  Require(static_cast<std::size_t>(in.rows()) == size_, ErrorKind::kShape,
          "operator of size " + std::to_string(size_) + " applied to " +
              std::to_string(in.rows()) + " rows");
  out.resize(in.rows(), in.cols());
  const Eigen::Index cols = in.cols();
  constexpr std::size_t kRowsPerTask = 256;
  const std::size_t tasks = (size_ + kRowsPerTask - 1) / kRowsPerTask;
  ParallelFor(tasks, workers, [&](std::size_t task) {
    const std::size_t begin = task * kRowsPerTask;
    const std::size_t end = std::min(size_, begin + kRowsPerTask);
    for (std::size_t i = begin; i < end; ++i) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        double acc = 0.0;
        for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
          acc += values_[e] * in(columns_[e], c);
        }
        out(static_cast<Eigen::Index>(i), c) = acc;
      }
    }
  });
}

Matrix SparseOperator::Apply(const Matrix& in, std::size_t workers) const {
  Matrix out;
  Apply(in, out, workers);
  return out;
}

Matrix SparseOperator::ToDense() const {
  Matrix dense = Matrix::Zero(static_cast<Eigen::Index>(size_), static_cast<Eigen::Index>(size_));
  for (std::size_t i = 0; i < size_; ++i) {
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      dense(static_cast<Eigen::Index>(i), columns_[e]) = values_[e];
    }
  }
  return dense;
}

SparseOperator BuildKernel(const Graph& graph, const KernelSpec& spec) {
  const std::size_t n = graph.num_nodes();
  std::vector<double> inv_sqrt_deg(n, 0.0);
  std::vector<double> inv_deg(n, 0.0);
  for (NodeId i = 0; i < n; ++i) {
    const double d = static_cast<double>(graph.degree(i));
    if (d > 0) {
      inv_sqrt_deg[i] = 1.0 / std::sqrt(d);
      inv_deg[i] = 1.0 / d;
    }
  }

  std::vector<std::size_t> offsets(n + 1, 0);
  std::vector<NodeId> columns;
  std::vector<double> values;
  columns.reserve(graph.column_indices().size() + n);
  values.reserve(graph.column_indices().size() + n);

  for (NodeId i = 0; i < n; ++i) {
    const auto row = graph.neighbors(i);
    const bool isolated = row.empty();
    if (isolated) {
      const bool identity = spec.isolated == IsolatedNodePolicy::kIdentityRow &&
                            spec.kind != KernelKind::kCombinatorialLaplacian;
      if (identity) {
        columns.push_back(i);
        values.push_back(1.0);
      }
      offsets[i + 1] = columns.size();
      continue;
    }
    double diagonal = 0.0;
    if (spec.kind == KernelKind::kCombinatorialLaplacian) diagonal = static_cast<double>(row.size());
    if (spec.kind == KernelKind::kSymNormLaplacian) diagonal = 1.0;
    bool diagonal_emitted = diagonal == 0.0;
    for (NodeId j : row) {
      if (!diagonal_emitted && j > i) {
        columns.push_back(i);
        values.push_back(diagonal);
        diagonal_emitted = true;
      }
      double w = 0.0;
      switch (spec.kind) {
        case KernelKind::kCombinatorialLaplacian: w = -1.0; break;
        case KernelKind::kSymNormAdjacency: w = inv_sqrt_deg[i] * inv_sqrt_deg[j]; break;
        case KernelKind::kRowNormAdjacency: w = inv_deg[i]; break;
        case KernelKind::kColNormAdjacency: w = inv_deg[j]; break;
        case KernelKind::kSymNormLaplacian: w = -inv_sqrt_deg[i] * inv_sqrt_deg[j]; break;
      }
      columns.push_back(j);
      values.push_back(w);
    }
    if (!diagonal_emitted) {
      columns.push_back(i);
      values.push_back(diagonal);
    }
    offsets[i + 1] = columns.size();
  }
  return SparseOperator(n, spec, std::move(offsets), std::move(columns), std::move(values));
}

void PropagationConfig::Validate() const {
  Require(lambda > 0.0 && lambda < 1.0, ErrorKind::kConfig,
          "propagation lambda must lie strictly inside (0, 1)");
  Require(num_steps <= max_steps, ErrorKind::kConfig,
          "propagation steps " + std::to_string(num_steps) + " exceed limit " +
              std::to_string(max_steps));
  Require(step_alpha > 0.0, ErrorKind::kConfig, "step size must be positive");
}

namespace {

void RequireFinite(const Matrix& m, const char* what) {
  Require(m.allFinite(), ErrorKind::kData, std::string(what) + " contains non-finite values");
}

}  // namespace

Matrix SmoothToDepth(const Matrix& base, const SparseOperator& op, double lambda,
                     std::size_t steps, std::size_t workers) {
  Require(static_cast<std::size_t>(base.rows()) == op.size(), ErrorKind::kShape,
          "frame has " + std::to_string(base.rows()) + " rows but operator has " +
              std::to_string(op.size()));
  Require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::kConfig, "lambda must lie in [0, 1]");
  Matrix current = base;
  Matrix smoothed;
  for (std::size_t t = 0; t < steps; ++t) {
    op.Apply(current, smoothed, workers);
    current = base + lambda * (smoothed - base);
  }
  return current;
}

std::vector<PredictionFrame> Propagate(const PredictionFrame& frame, const SparseOperator& op,
                                       const PropagationConfig& cfg) {
  cfg.Validate();
  Require(frame.depth == 0, ErrorKind::kConfig, "propagation input must have depth 0");
  Require(static_cast<std::size_t>(frame.values.rows()) == op.size(), ErrorKind::kShape,
          "frame has " + std::to_string(frame.values.rows()) + " rows but operator has " +
              std::to_string(op.size()));
  RequireFinite(frame.values, "propagation input");

  std::vector<PredictionFrame> frames;
  frames.reserve(cfg.num_steps + 1);
  frames.push_back(frame);
  Matrix smoothed;
  for (std::size_t t = 1; t <= cfg.num_steps; ++t) {
    op.Apply(frames.back().values, smoothed, cfg.workers);
    PredictionFrame next;
    next.values = frame.values + cfg.lambda * (smoothed - frame.values);
    next.depth = t;
    next.model_tag = frame.model_tag;
    next.is_probability = frame.is_probability;
    frames.push_back(std::move(next));
  }
  return frames;
}

Matrix GradientStep(const Matrix& y, const Matrix& target, const SparseOperator& laplacian,
                    double lambda, double step_alpha) {
  Require(y.rows() == target.rows() && y.cols() == target.cols(), ErrorKind::kShape,
          "gradient step operands differ in shape");
  Require(laplacian.spec().kind == KernelKind::kCombinatorialLaplacian, ErrorKind::kConfig,
          "gradient step requires a combinatorial Laplacian");
  const Matrix ly = laplacian.Apply(y);
  return y - step_alpha * (lambda * ly + y - target);
}

Matrix ClosedFormSolve(const Matrix& target, const Graph& graph, double lambda) {
  const std::size_t n = graph.num_nodes();
  Require(n <= kDenseOracleMaxNodes, ErrorKind::kSize,
          "dense solve limited to " + std::to_string(kDenseOracleMaxNodes) + " nodes, got " +
              std::to_string(n));
  Require(static_cast<std::size_t>(target.rows()) == n, ErrorKind::kShape,
          "target rows do not match graph nodes");
  Require(lambda >= 0.0, ErrorKind::kConfig, "lambda must be non-negative");
  const Matrix laplacian = BuildKernel(graph, {KernelKind::kCombinatorialLaplacian}).ToDense();
  const Matrix system = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) +
                        lambda * laplacian;
  Eigen::LLT<Matrix> llt(system);
  Require(llt.info() == Eigen::Success, ErrorKind::kNumeric, "factorization of I + lambda L failed");
  return llt.solve(target);
}

double Energy(const Matrix& y, const Matrix& target, const Graph& graph, double lambda,
              FidelityWeight weight) {
  Require(y.rows() == target.rows() && y.cols() == target.cols(), ErrorKind::kShape,
          "energy operands differ in shape");
  Require(static_cast<std::size_t>(y.rows()) == graph.num_nodes(), ErrorKind::kShape,
          "energy operand rows do not match graph nodes");
  double smoothness = 0.0;
  for (const auto& [u, v] : graph.EdgeList()) {
    smoothness += (y.row(u) - y.row(v)).squaredNorm();
  }
  const double fidelity = (y - target).squaredNorm();
  const double fidelity_weight = weight == FidelityWeight::kOneMinusLambda ? 1.0 - lambda : 1.0;
  return fidelity_weight * fidelity + lambda * smoothness;
}

double LaplacianSpectralRadius(const Graph& graph) {
  Require(graph.num_nodes() <= kDenseOracleMaxNodes, ErrorKind::kSize,
          "dense eigensolve limited to " + std::to_string(kDenseOracleMaxNodes) + " nodes");
  if (graph.num_nodes() == 0) return 0.0;
  const Matrix laplacian = BuildKernel(graph, {KernelKind::kCombinatorialLaplacian}).ToDense();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(laplacian, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff();
}

}  // namespace stackprop
