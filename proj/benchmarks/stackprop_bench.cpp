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

#include <benchmark/benchmark.h>

#include <vector>

#include "stackprop/bagging.hpp"
#include "stackprop/graph.hpp"
#include "stackprop/models.hpp"
#include "stackprop/rng.hpp"

namespace {

using namespace stackprop;

// Sparse random graph with about `degree` neighbors per node.
Graph SparseGraph(std::size_t n, double degree, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  const auto m = static_cast<std::size_t>(degree * static_cast<double>(n) / 2.0);
  for (std::size_t e = 0; e < m; ++e) {
    edges.emplace_back(static_cast<NodeId>(rng.UniformIndex(n)), static_cast<NodeId>(rng.UniformIndex(n)));
  }
  return Graph::FromEdges(n, edges);
}

Matrix Noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.Normal();
  }
  return m;
}

void BM_BuildKernel(benchmark::State& state) {
  const Graph g = SparseGraph(static_cast<std::size_t>(state.range(0)), 10.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(BuildKernel(g, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.num_edges()));
}
BENCHMARK(BM_BuildKernel)->Arg(10000)->Arg(100000);

void BM_Propagate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Graph g = SparseGraph(n, 10.0, 2);
  const SparseOperator op = BuildKernel(g, {});
  PredictionFrame frame;
  frame.values = Noise(static_cast<Eigen::Index>(n), 8, 3);
  PropagationConfig cfg;
  cfg.num_steps = 4;
  cfg.workers = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(Propagate(frame, op, cfg));
}
BENCHMARK(BM_Propagate)->Args({10000, 1})->Args({100000, 1})->Args({100000, 4});

void BM_GbdtTrain(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Matrix x = Noise(n, 10, 4);
  Targets y;
  for (Eigen::Index i = 0; i < n; ++i) y.values.push_back(x(i, 0) - 0.5 * x(i, 3) + 0.1 * x(i, 7));
  const ModelSpec spec = MakeSpec(ModelFamily::kGbdt, "", {{"trees", 50}});
  for (auto _ : state) benchmark::DoNotOptimize(Train(spec, x, y));
}
BENCHMARK(BM_GbdtTrain)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_BaggedRidge(benchmark::State& state) {
  const std::size_t n = 5000;
  const Matrix x = Noise(static_cast<Eigen::Index>(n), 16, 5);
  LabelTable labels;
  labels.values.resize(n);
  labels.labeled_mask.resize(n);
  std::vector<NodeId> labeled, unlabeled;
  for (NodeId v = 0; v < n; ++v) {
    labels.labeled_mask[v] = v % 2 == 0;
    labels.values[v] = x(v, 0);
    (labels.labeled_mask[v] ? labeled : unlabeled).push_back(v);
  }
  const FoldPlan plan = MakeFoldPlan(labeled, static_cast<std::size_t>(state.range(0)), 1, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        RunBaggedTraining(plan, x, labels, MakeSpec(ModelFamily::kRidgeLinear), unlabeled));
  }
}
BENCHMARK(BM_BaggedRidge)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
