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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "model_impl.hpp"

namespace stackprop {
namespace {

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;         // leaf output, learning rate applied
};

using Tree = std::vector<TreeNode>;

double EvaluateTree(const Tree& tree, const Matrix& x, Eigen::Index row) {
  std::int32_t at = 0;
  while (tree[at].feature >= 0) {
    const TreeNode& node = tree[at];
    at = x(row, node.feature) <= node.threshold ? node.left : node.right;
  }
  return tree[at].value;
}

// Gradient-boosted regression trees. Regression boosts one tree per round on
// squared loss; classification boosts one tree per class per round on the
// softmax cross-entropy with Newton leaf values.
class GbdtModel final : public TrainedModel {
 public:
  GbdtModel(Eigen::RowVectorXd init, std::vector<Tree> trees, std::vector<double> loss)
      : init_(std::move(init)), trees_(std::move(trees)), loss_(std::move(loss)) {}

  ModelFamily family() const override { return ModelFamily::kGbdt; }

  Matrix PredictMatrix(const Matrix& x) const override {
    CheckInput(x);
    const Matrix raw = RawScores(x);
    return task() == Task::kClassification ? Softmax(raw) : raw;
  }

  std::vector<double> TrainingLoss() const override { return loss_; }

  void WriteParameters(BlobWriter& out) const override {
    out.Doubles({init_.data(), static_cast<std::size_t>(init_.size())});
    out.U64(trees_.size());
    for (const Tree& tree : trees_) {
      out.U64(tree.size());
      for (const TreeNode& node : tree) {
        out.U32(static_cast<std::uint32_t>(node.feature));
        out.F64(node.threshold);
        out.U32(static_cast<std::uint32_t>(node.left));
        out.U32(static_cast<std::uint32_t>(node.right));
        out.F64(node.value);
      }
    }
    out.Doubles(loss_);
  }

  static std::unique_ptr<TrainedModel> Read(BlobReader& in) {
    const auto init = in.Doubles();
    std::vector<Tree> trees(in.U64());
    for (Tree& tree : trees) {
      tree.resize(in.U64());
      for (TreeNode& node : tree) {
        node.feature = static_cast<std::int32_t>(in.U32());
        node.threshold = in.F64();
        node.left = static_cast<std::int32_t>(in.U32());
        node.right = static_cast<std::int32_t>(in.U32());
        node.value = in.F64();
      }
    }
    auto loss = in.Doubles();
    return std::make_unique<GbdtModel>(
        Eigen::Map<const Eigen::RowVectorXd>(init.data(), static_cast<Eigen::Index>(init.size())),
        std::move(trees), std::move(loss));
  }

 private:
  Matrix RawScores(const Matrix& x) const {
    const Eigen::Index outputs = init_.size();
    Matrix raw = init_.replicate(x.rows(), 1);
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      const auto k = static_cast<Eigen::Index>(t % static_cast<std::size_t>(outputs));
      for (Eigen::Index i = 0; i < x.rows(); ++i) raw(i, k) += EvaluateTree(trees_[t], x, i);
    }
    return raw;
  }

  Eigen::RowVectorXd init_;
  std::vector<Tree> trees_;  // round-major; tree t scores output t % outputs
  std::vector<double> loss_;
};

// Quantized training matrix: per feature, ascending split thresholds and the
// bin of every row (bin b holds values in (t[b-1], t[b]]).
struct BinnedFeatures {
  std::vector<std::vector<double>> thresholds;
  std::vector<std::vector<std::uint16_t>> bins;
};

BinnedFeatures BinFeatures(const Matrix& x, std::size_t max_bins) {
  BinnedFeatures out;
  const auto n = static_cast<std::size_t>(x.rows());
  out.thresholds.resize(static_cast<std::size_t>(x.cols()));
  out.bins.resize(static_cast<std::size_t>(x.cols()));
  std::vector<double> sorted(n);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (std::size_t i = 0; i < n; ++i) sorted[i] = x(static_cast<Eigen::Index>(i), j);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<double>& t = out.thresholds[static_cast<std::size_t>(j)];
    const std::size_t unique = sorted.size();
    if (unique <= max_bins) {
      for (std::size_t i = 0; i + 1 < unique; ++i) t.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    } else {
      for (std::size_t b = 1; b < max_bins; ++b) {
        const std::size_t idx = b * unique / max_bins;
        const double cut = 0.5 * (sorted[idx - 1] + sorted[idx]);
        if (t.empty() || cut > t.back()) t.push_back(cut);
      }
    }
    auto& column = out.bins[static_cast<std::size_t>(j)];
    column.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x(static_cast<Eigen::Index>(i), j);
      column[i] = static_cast<std::uint16_t>(std::lower_bound(t.begin(), t.end(), v) - t.begin());
    }
  }
  return out;
}

struct TreeParams {
  std::size_t max_depth;
  std::size_t min_leaf;
  double l2;
  double learning_rate;
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedFeatures& binned, const std::vector<double>& grad,
              const std::vector<double>& hess, const TreeParams& params)
      : binned_(binned), grad_(grad), hess_(hess), params_(params) {}

  Tree Build(std::vector<std::uint32_t> rows) {
    tree_.clear();
    Grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  std::int32_t Grow(std::vector<std::uint32_t> rows, std::size_t depth) {
    double g_total = 0.0, h_total = 0.0;
    for (std::uint32_t r : rows) {
      g_total += grad_[r];
      h_total += hess_[r];
    }
    const auto index = static_cast<std::int32_t>(tree_.size());
    tree_.push_back({});
    tree_[index].value = -params_.learning_rate * g_total / std::max(h_total + params_.l2, 1e-12);

    if (depth >= params_.max_depth || rows.size() < 2 * params_.min_leaf) return index;

    const double parent_score = g_total * g_total / std::max(h_total + params_.l2, 1e-12);
    double best_gain = 1e-12;
    std::int32_t best_feature = -1;
    std::size_t best_bin = 0;
    std::vector<double> hist_g, hist_h;
    std::vector<std::size_t> hist_n;
    for (std::size_t j = 0; j < binned_.thresholds.size(); ++j) {
      const std::size_t nbins = binned_.thresholds[j].size() + 1;
      if (nbins < 2) continue;
      hist_g.assign(nbins, 0.0);
      hist_h.assign(nbins, 0.0);
      hist_n.assign(nbins, 0);
      const auto& column = binned_.bins[j];
      for (std::uint32_t r : rows) {
        const std::uint16_t b = column[r];
        hist_g[b] += grad_[r];
        hist_h[b] += hess_[r];
        ++hist_n[b];
      }
      double gl = 0.0, hl = 0.0;
      std::size_t nl = 0;
      for (std::size_t b = 0; b + 1 < nbins; ++b) {
        gl += hist_g[b];
        hl += hist_h[b];
        nl += hist_n[b];
        const std::size_t nr = rows.size() - nl;
        if (nl < params_.min_leaf) continue;
        if (nr < params_.min_leaf) break;
        const double gr = g_total - gl;
        const double hr = h_total - hl;
        const double gain = gl * gl / std::max(hl + params_.l2, 1e-12) +
                            gr * gr / std::max(hr + params_.l2, 1e-12) - parent_score;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<std::int32_t>(j);
          best_bin = b;
        }
      }
    }
    if (best_feature < 0) return index;

    std::vector<std::uint32_t> left, right;
    const auto& column = binned_.bins[static_cast<std::size_t>(best_feature)];
    for (std::uint32_t r : rows) (column[r] <= best_bin ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree_[index].feature = best_feature;
    tree_[index].threshold = binned_.thresholds[static_cast<std::size_t>(best_feature)][best_bin];
    const std::int32_t l = Grow(std::move(left), depth + 1);
    tree_[index].left = l;
    const std::int32_t r = Grow(std::move(right), depth + 1);
    tree_[index].right = r;
    return index;
  }

  const BinnedFeatures& binned_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  const TreeParams& params_;
  Tree tree_;
};

}  // namespace

std::unique_ptr<TrainedModel> TrainGbdt(const ModelSpec& spec, const Matrix& x, const Targets& y) {
  const auto rounds = static_cast<std::size_t>(spec.Get("trees"));
  const TreeParams params{static_cast<std::size_t>(spec.Get("depth")),
                          static_cast<std::size_t>(spec.Get("min_leaf")), spec.Get("l2_leaf"),
                          spec.Get("learning_rate")};
  const auto max_bins = std::min<std::size_t>(static_cast<std::size_t>(spec.Get("max_bins")), 65535);
  const BinnedFeatures binned = BinFeatures(x, max_bins);
  const std::size_t n = y.size();
  const bool classification = y.task == Task::kClassification;
  const std::size_t outputs = y.width();

  Eigen::RowVectorXd init(static_cast<Eigen::Index>(outputs));
  if (classification) {
    std::vector<double> counts(outputs, 1.0);
    for (double v : y.values) counts[static_cast<std::size_t>(v)] += 1.0;
    for (std::size_t k = 0; k < outputs; ++k) {
      init(static_cast<Eigen::Index>(k)) =
          std::log(counts[k] / (static_cast<double>(n) + static_cast<double>(outputs)));
    }
  } else {
    init(0) = std::accumulate(y.values.begin(), y.values.end(), 0.0) / static_cast<double>(n);
  }

  const Matrix onehot = y.AsMatrix();
  Matrix raw = init.replicate(static_cast<Eigen::Index>(n), 1);
  std::vector<Tree> trees;
  trees.reserve(rounds * outputs);
  std::vector<double> loss;
  loss.reserve(rounds);
  std::vector<std::uint32_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0u);
  std::vector<double> grad(n), hess(n);

  for (std::size_t round = 0; round < rounds; ++round) {
    const Matrix p = classification ? Softmax(raw) : raw;
    std::vector<Tree> round_trees;
    for (std::size_t k = 0; k < outputs; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        grad[i] = p(ii, kk) - onehot(ii, kk);
        hess[i] = classification ? std::max(p(ii, kk) * (1.0 - p(ii, kk)), 1e-6) : 1.0;
      }
      round_trees.push_back(TreeBuilder(binned, grad, hess, params).Build(all_rows));
    }
    for (std::size_t k = 0; k < outputs; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        raw(ii, static_cast<Eigen::Index>(k)) += EvaluateTree(round_trees[k], x, ii);
      }
      trees.push_back(std::move(round_trees[k]));
    }
    loss.push_back(classification ? LogLoss(Softmax(raw), y) : MeanSquaredError(raw, onehot));
  }
  return std::make_unique<GbdtModel>(std::move(init), std::move(trees), std::move(loss));
}

std::unique_ptr<TrainedModel> ReadGbdt(BlobReader& in) { return GbdtModel::Read(in); }

}  // namespace stackprop
