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

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "model_impl.hpp"

namespace stackprop {
namespace {

// y = standardize(x) . coef + intercept
class RidgeModel final : public TrainedModel {
 public:
  RidgeModel(Standardizer standardizer, Vector coef, double intercept)
      : standardizer_(std::move(standardizer)), coef_(std::move(coef)), intercept_(intercept) {}

  ModelFamily family() const override { return ModelFamily::kRidgeLinear; }

  Matrix PredictMatrix(const Matrix& x) const override {
    CheckInput(x);
    Matrix out = standardizer_.Apply(x) * coef_;
    out.array() += intercept_;
    return out;
  }

  void WriteParameters(BlobWriter& out) const override {
    standardizer_.Write(out);
    out.DenseVector(coef_);
    out.F64(intercept_);
  }

  static std::unique_ptr<TrainedModel> Read(BlobReader& in) {
    Standardizer s = Standardizer::Read(in);
    Vector coef = in.DenseVector();
    const double intercept = in.F64();
    return std::make_unique<RidgeModel>(std::move(s), std::move(coef), intercept);
  }

 private:
  Standardizer standardizer_;
  Vector coef_;
  double intercept_;
};

// Multinomial logistic regression fitted by full-batch gradient descent.
class LogisticModel final : public TrainedModel {
 public:
  LogisticModel(Standardizer standardizer, Matrix weights, Eigen::RowVectorXd bias,
                std::vector<double> loss)
      : standardizer_(std::move(standardizer)),
        weights_(std::move(weights)),
        bias_(std::move(bias)),
        loss_(std::move(loss)) {}

  ModelFamily family() const override { return ModelFamily::kLogisticLinear; }

  Matrix PredictMatrix(const Matrix& x) const override {
    CheckInput(x);
    Matrix logits = standardizer_.Apply(x) * weights_;
    logits.rowwise() += bias_;
    return Softmax(logits);
  }

  std::vector<double> TrainingLoss() const override { return loss_; }

  void WriteParameters(BlobWriter& out) const override {
    standardizer_.Write(out);
    out.Dense(weights_);
    out.Doubles({bias_.data(), static_cast<std::size_t>(bias_.size())});
    out.Doubles(loss_);
  }

  static std::unique_ptr<TrainedModel> Read(BlobReader& in) {
    Standardizer s = Standardizer::Read(in);
    Matrix w = in.Dense();
    const auto b = in.Doubles();
    auto loss = in.Doubles();
    Eigen::RowVectorXd bias =
        Eigen::Map<const Eigen::RowVectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    return std::make_unique<LogisticModel>(std::move(s), std::move(w), std::move(bias),
                                           std::move(loss));
  }

 private:
  Standardizer standardizer_;
  Matrix weights_;
  Eigen::RowVectorXd bias_;
  std::vector<double> loss_;
};

}  // namespace

std::unique_ptr<TrainedModel> TrainRidge(const ModelSpec& spec, const Matrix& x, const Targets& y) {
  const double l2 = spec.Get("l2");
  const bool intercept = spec.Get("fit_intercept") != 0.0;
  Standardizer s = spec.Get("standardize") != 0.0 ? Standardizer::Fit(x)
                                                   : Standardizer::Identity(x.cols());
  Matrix xs = s.Apply(x);
  Vector target = Eigen::Map<const Vector>(y.values.data(), static_cast<Eigen::Index>(y.size()));

  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(x.cols());
  double y_mean = 0.0;
  if (intercept) {
    x_mean = xs.colwise().mean();
    y_mean = target.mean();
    xs.rowwise() -= x_mean;
    target.array() -= y_mean;
  }

  Vector coef;
  if (l2 > 0.0 && xs.cols() > xs.rows()) {
    // Dual form: X^T (X X^T + l2 I)^{-1} y, cheaper when columns outnumber rows.
    Matrix kernel = xs * xs.transpose();
    kernel.diagonal().array() += l2;
    coef = xs.transpose() * kernel.ldlt().solve(target);
  } else if (l2 > 0.0) {
    Matrix gram = xs.transpose() * xs;
    gram.diagonal().array() += l2;
    coef = gram.ldlt().solve(xs.transpose() * target);
  } else {
    coef = xs.completeOrthogonalDecomposition().solve(target);
  }
  const double bias = y_mean - x_mean.dot(coef);
  return std::make_unique<RidgeModel>(std::move(s), std::move(coef), bias);
}

std::unique_ptr<TrainedModel> ReadRidge(BlobReader& in) { return RidgeModel::Read(in); }

std::unique_ptr<TrainedModel> TrainLogistic(const ModelSpec& spec, const Matrix& x,
                                            const Targets& y) {
  const double l2 = spec.Get("l2");
  const auto epochs = static_cast<std::size_t>(spec.Get("epochs"));
  const double rate = spec.Get("learning_rate");

  Standardizer s = Standardizer::Fit(x);
  const Matrix xs = s.Apply(x);
  const Matrix onehot = y.AsMatrix();
  const double n = static_cast<double>(x.rows());
  const auto classes = static_cast<Eigen::Index>(y.num_classes);

  Matrix w = Matrix::Zero(x.cols(), classes);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
  std::vector<double> loss;
  loss.reserve(epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Matrix logits = xs * w;
    logits.rowwise() += b;
    const Matrix p = Softmax(logits);
    const Matrix residual = p - onehot;
    w -= rate * (xs.transpose() * residual / n + l2 * w);
    b -= rate * residual.colwise().mean();
    loss.push_back(LogLoss(p, y) + 0.5 * l2 * w.squaredNorm());
  }
  return std::make_unique<LogisticModel>(std::move(s), std::move(w), std::move(b), std::move(loss));
}

std::unique_ptr<TrainedModel> ReadLogistic(BlobReader& in) { return LogisticModel::Read(in); }

}  // namespace stackprop
