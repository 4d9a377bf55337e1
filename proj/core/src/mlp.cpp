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

#include "model_impl.hpp"
#include "stackprop/rng.hpp"

namespace stackprop {
namespace {

// One hidden ReLU layer. Inputs are standardized; regression targets are
// standardized during fitting and mapped back at prediction.
class MlpModel final : public TrainedModel {
 public:
  struct Params {
    Standardizer standardizer;
    Matrix w1;
    Eigen::RowVectorXd b1;
    Matrix w2;
    Eigen::RowVectorXd b2;
    double target_mean = 0.0;
    double target_scale = 1.0;
  };

  MlpModel(Params params, std::vector<double> loss)
      : params_(std::move(params)), loss_(std::move(loss)) {}

  ModelFamily family() const override { return ModelFamily::kMlp; }

  Matrix PredictMatrix(const Matrix& x) const override {
    CheckInput(x);
    Matrix hidden = params_.standardizer.Apply(x) * params_.w1;
    hidden.rowwise() += params_.b1;
    hidden = hidden.cwiseMax(0.0);
    Matrix out = hidden * params_.w2;
    out.rowwise() += params_.b2;
    if (task() == Task::kClassification) return Softmax(out);
    return (out.array() * params_.target_scale + params_.target_mean).matrix();
  }

  std::vector<double> TrainingLoss() const override { return loss_; }

  void WriteParameters(BlobWriter& out) const override {
    params_.standardizer.Write(out);
    out.Dense(params_.w1);
    out.Doubles({params_.b1.data(), static_cast<std::size_t>(params_.b1.size())});
    out.Dense(params_.w2);
    out.Doubles({params_.b2.data(), static_cast<std::size_t>(params_.b2.size())});
    out.F64(params_.target_mean);
    out.F64(params_.target_scale);
    out.Doubles(loss_);
  }

  static std::unique_ptr<TrainedModel> Read(BlobReader& in) {
    Params p;
    p.standardizer = Standardizer::Read(in);
    p.w1 = in.Dense();
    auto b1 = in.Doubles();
    p.b1 = Eigen::Map<const Eigen::RowVectorXd>(b1.data(), static_cast<Eigen::Index>(b1.size()));
    p.w2 = in.Dense();
    auto b2 = in.Doubles();
    p.b2 = Eigen::Map<const Eigen::RowVectorXd>(b2.data(), static_cast<Eigen::Index>(b2.size()));
    p.target_mean = in.F64();
    p.target_scale = in.F64();
    auto loss = in.Doubles();
    return std::make_unique<MlpModel>(std::move(p), std::move(loss));
  }

 private:
  Params params_;
  std::vector<double> loss_;
};

// Adam moment buffers for one parameter block.
struct AdamSlot {
  Matrix m, v;
  explicit AdamSlot(Eigen::Index rows, Eigen::Index cols)
      : m(Matrix::Zero(rows, cols)), v(Matrix::Zero(rows, cols)) {}

  template <typename Param, typename Grad>
  void Step(Param& param, const Grad& grad, double rate, std::size_t t) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    param.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
  }
};

Matrix UniformInit(Eigen::Index rows, Eigen::Index cols, double limit, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.Uniform(-limit, limit);
  }
  return m;
}

}  // namespace

std::unique_ptr<TrainedModel> TrainMlp(const ModelSpec& spec, const Matrix& x, const Targets& y) {
  const auto hidden = static_cast<Eigen::Index>(spec.Get("hidden"));
  const auto epochs = static_cast<std::size_t>(spec.Get("epochs"));
  const double rate = spec.Get("learning_rate");
  const double l2 = spec.Get("l2");
  const bool classification = y.task == Task::kClassification;
  const auto outputs = static_cast<Eigen::Index>(y.width());
  const Eigen::Index d = x.cols();
  const double n = static_cast<double>(x.rows());

  MlpModel::Params p;
  p.standardizer = Standardizer::Fit(x);
  const Matrix xs = p.standardizer.Apply(x);
  Matrix target = y.AsMatrix();
  if (!classification) {
    p.target_mean = target.mean();
    const double var = (target.array() - p.target_mean).square().mean();
    p.target_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
    target = ((target.array() - p.target_mean) / p.target_scale).matrix();
  }

  Rng rng(CombineSeed(spec.seed, 0x6d6c70));
  p.w1 = UniformInit(d, hidden, std::sqrt(6.0 / static_cast<double>(std::max<Eigen::Index>(d, 1))), rng);
  p.b1 = Eigen::RowVectorXd::Zero(hidden);
  p.w2 = UniformInit(hidden, outputs, std::sqrt(6.0 / static_cast<double>(hidden + outputs)), rng);
  p.b2 = Eigen::RowVectorXd::Zero(outputs);

  AdamSlot s_w1(d, hidden), s_b1(1, hidden), s_w2(hidden, outputs), s_b2(1, outputs);
  std::vector<double> loss;
  loss.reserve(epochs);
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    Matrix pre = xs * p.w1;
    pre.rowwise() += p.b1;
    const Matrix act = pre.cwiseMax(0.0);
    Matrix out = act * p.w2;
    out.rowwise() += p.b2;

    Matrix delta;  // d loss / d out
    double data_loss;
    if (classification) {
      const Matrix prob = Softmax(out);
      data_loss = LogLoss(prob, y);
      delta = (prob - target) / n;
    } else {
      const Matrix diff = out - target;
      data_loss = diff.squaredNorm() / n;
      delta = 2.0 * diff / n;
    }
    loss.push_back(data_loss + 0.5 * l2 * (p.w1.squaredNorm() + p.w2.squaredNorm()));

    const Matrix g_w2 = act.transpose() * delta + l2 * p.w2;
    const Eigen::RowVectorXd g_b2 = delta.colwise().sum();
    const Matrix back = (delta * p.w2.transpose()).cwiseProduct(
        (pre.array() > 0.0).cast<double>().matrix());
    const Matrix g_w1 = xs.transpose() * back + l2 * p.w1;
    const Eigen::RowVectorXd g_b1 = back.colwise().sum();

    s_w1.Step(p.w1, g_w1, rate, epoch);
    s_b1.Step(p.b1, g_b1, rate, epoch);
    s_w2.Step(p.w2, g_w2, rate, epoch);
    s_b2.Step(p.b2, g_b2, rate, epoch);
  }
  return std::make_unique<MlpModel>(std::move(p), std::move(loss));
}

std::unique_ptr<TrainedModel> ReadMlp(BlobReader& in) { return MlpModel::Read(in); }

}  // namespace stackprop
