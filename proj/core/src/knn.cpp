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
#include <numeric>

#include "model_impl.hpp"

namespace stackprop {
namespace {

// Brute-force k nearest neighbours in standardized feature space. Distance
// ties resolve to the lower training row.
class KnnModel final : public TrainedModel {
 public:
  KnnModel(Standardizer standardizer, Matrix points, Matrix targets, std::size_t neighbors,
           bool distance_weighted)
      : standardizer_(std::move(standardizer)),
        points_(std::move(points)),
        targets_(std::move(targets)),
        neighbors_(neighbors),
        distance_weighted_(distance_weighted) {}

  ModelFamily family() const override { return ModelFamily::kKnn; }

  Matrix PredictMatrix(const Matrix& x) const override {
    CheckInput(x);
    const Matrix q = standardizer_.Apply(x);
    const std::size_t n = static_cast<std::size_t>(points_.rows());
    const std::size_t k = std::min(neighbors_, n);
    Matrix out = Matrix::Zero(x.rows(), targets_.cols());
    std::vector<std::pair<double, std::size_t>> order(n);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double d = (points_.row(static_cast<Eigen::Index>(j)) - q.row(i)).squaredNorm();
        order[j] = {d, j};
      }
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
      double total = 0.0;
      for (std::size_t r = 0; r < k; ++r) {
        const double w = distance_weighted_ ? 1.0 / (std::sqrt(order[r].first) + 1e-12) : 1.0;
        out.row(i) += w * targets_.row(static_cast<Eigen::Index>(order[r].second));
        total += w;
      }
      out.row(i) /= total;
    }
    return out;
  }

  void WriteParameters(BlobWriter& out) const override {
    standardizer_.Write(out);
    out.Dense(points_);
    out.Dense(targets_);
    out.U64(neighbors_);
    out.U8(distance_weighted_ ? 1 : 0);
  }

  static std::unique_ptr<TrainedModel> Read(BlobReader& in) {
    Standardizer s = Standardizer::Read(in);
    Matrix points = in.Dense();
    Matrix targets = in.Dense();
    const std::uint64_t k = in.U64();
    const bool weighted = in.U8() != 0;
    return std::make_unique<KnnModel>(std::move(s), std::move(points), std::move(targets), k,
                                      weighted);
  }

 private:
  Standardizer standardizer_;
  Matrix points_;
  Matrix targets_;
  std::size_t neighbors_;
  bool distance_weighted_;
};

}  // namespace

std::unique_ptr<TrainedModel> TrainKnn(const ModelSpec& spec, const Matrix& x, const Targets& y) {
  Standardizer s = Standardizer::Fit(x);
  Matrix points = s.Apply(x);
  return std::make_unique<KnnModel>(std::move(s), std::move(points), y.AsMatrix(),
                                    static_cast<std::size_t>(spec.Get("neighbors")),
                                    spec.Get("distance_weighted") != 0.0);
}

std::unique_ptr<TrainedModel> ReadKnn(BlobReader& in) { return KnnModel::Read(in); }

}  // namespace stackprop
