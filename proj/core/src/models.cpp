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

#include "stackprop/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "model_impl.hpp"
#include "stackprop/error.hpp"

namespace stackprop {

std::string ModelFamilyName(ModelFamily family) {
  switch (family) {
    case ModelFamily::kConstant: return "constant";
    case ModelFamily::kRidgeLinear: return "ridge_linear";
    case ModelFamily::kLogisticLinear: return "logistic_linear";
    case ModelFamily::kKnn: return "knn";
    case ModelFamily::kGbdt: return "gbdt";
    case ModelFamily::kMlp: return "mlp";
  }
  Throw(ErrorKind::kConfig, "unknown model family");
}

ModelFamily ParseModelFamily(const std::string& name) {
  for (auto family : {ModelFamily::kConstant, ModelFamily::kRidgeLinear,
                      ModelFamily::kLogisticLinear, ModelFamily::kKnn, ModelFamily::kGbdt,
                      ModelFamily::kMlp}) {
    if (ModelFamilyName(family) == name) return family;
  }
  Throw(ErrorKind::kConfig, "unknown model family '" + name + "'");
}

std::map<std::string, double> DefaultHyperparameters(ModelFamily family) {
  switch (family) {
    case ModelFamily::kConstant:
      return {};
    case ModelFamily::kRidgeLinear:
      return {{"l2", 1.0}, {"fit_intercept", 1.0}, {"standardize", 1.0}};
    case ModelFamily::kLogisticLinear:
      return {{"l2", 1e-4}, {"epochs", 300.0}, {"learning_rate", 0.5}};
    case ModelFamily::kKnn:
      return {{"neighbors", 10.0}, {"distance_weighted", 0.0}};
    case ModelFamily::kGbdt:
      return {{"trees", 200.0}, {"depth", 3.0},    {"learning_rate", 0.1},
              {"min_leaf", 3.0}, {"l2_leaf", 1.0}, {"max_bins", 64.0}};
    case ModelFamily::kMlp:
      return {{"hidden", 64.0}, {"epochs", 200.0}, {"learning_rate", 1e-2}, {"l2", 1e-4}};
  }
  return {};
}

ModelSpec MakeSpec(ModelFamily family, std::string tag,
                   std::map<std::string, double> hyperparameters) {
  ModelSpec spec;
  spec.family = family;
  spec.tag = tag.empty() ? ModelFamilyName(family) : std::move(tag);
  spec.hyperparameters = std::move(hyperparameters);
  return spec;
}

double ModelSpec::Get(const std::string& key) const {
  if (auto it = hyperparameters.find(key); it != hyperparameters.end()) return it->second;
  const auto defaults = DefaultHyperparameters(family);
  auto it = defaults.find(key);
  Require(it != defaults.end(), ErrorKind::kConfig,
          "family " + ModelFamilyName(family) + " has no hyperparameter '" + key + "'");
  return it->second;
}

namespace {

bool IsWholeNumber(double v) { return std::isfinite(v) && v == std::floor(v); }

void RequireCount(const ModelSpec& spec, const std::string& key, double min_value) {
  const double v = spec.Get(key);
  Require(IsWholeNumber(v) && v >= min_value, ErrorKind::kConfig,
          ModelFamilyName(spec.family) + " " + key + " must be an integer >= " +
              std::to_string(static_cast<long long>(min_value)));
}

void RequireRange(const ModelSpec& spec, const std::string& key, double lo, double hi,
                  bool lo_open) {
  const double v = spec.Get(key);
  const bool ok = std::isfinite(v) && (lo_open ? v > lo : v >= lo) && v <= hi;
  Require(ok, ErrorKind::kConfig, ModelFamilyName(spec.family) + " " + key + " out of range");
}

void RequireFlag(const ModelSpec& spec, const std::string& key) {
  const double v = spec.Get(key);
  Require(v == 0.0 || v == 1.0, ErrorKind::kConfig,
          ModelFamilyName(spec.family) + " " + key + " must be 0 or 1");
}

}  // namespace

void ModelSpec::Validate(Task task) const {
  const auto defaults = DefaultHyperparameters(family);
  for (const auto& [key, value] : hyperparameters) {
    Require(defaults.count(key) != 0, ErrorKind::kConfig,
            "unknown hyperparameter '" + key + "' for family " + ModelFamilyName(family));
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  switch (family) {
    case ModelFamily::kConstant:
      break;
    case ModelFamily::kRidgeLinear:
      Require(task == Task::kRegression, ErrorKind::kConfig,
              "ridge_linear supports regression only; use logistic_linear");
      RequireRange(*this, "l2", 0.0, kInf, false);
      RequireFlag(*this, "fit_intercept");
      RequireFlag(*this, "standardize");
      break;
    case ModelFamily::kLogisticLinear:
      Require(task == Task::kClassification, ErrorKind::kConfig,
              "logistic_linear supports classification only; use ridge_linear");
      RequireRange(*this, "l2", 0.0, kInf, false);
      RequireCount(*this, "epochs", 1);
      RequireRange(*this, "learning_rate", 0.0, kInf, true);
      break;
    case ModelFamily::kKnn:
      RequireCount(*this, "neighbors", 1);
      RequireFlag(*this, "distance_weighted");
      break;
    case ModelFamily::kGbdt:
      RequireCount(*this, "trees", 1);
      RequireCount(*this, "depth", 1);
      RequireRange(*this, "learning_rate", 0.0, 1.0, true);
      RequireCount(*this, "min_leaf", 1);
      RequireRange(*this, "l2_leaf", 0.0, kInf, false);
      RequireCount(*this, "max_bins", 2);
      break;
    case ModelFamily::kMlp:
      RequireCount(*this, "hidden", 1);
      RequireCount(*this, "epochs", 1);
      RequireRange(*this, "learning_rate", 0.0, kInf, true);
      RequireRange(*this, "l2", 0.0, kInf, false);
      break;
  }
}

PredictionFrame TrainedModel::Predict(const Matrix& x) const {
  PredictionFrame frame;
  frame.values = PredictMatrix(x);
  frame.model_tag = tag_;
  frame.is_probability = task_ == Task::kClassification;
  return frame;
}

void TrainedModel::SetHeader(Task task, std::size_t num_classes, std::size_t input_width,
                             std::string tag) {
  task_ = task;
  num_classes_ = num_classes;
  input_width_ = input_width;
  tag_ = std::move(tag);
}

void TrainedModel::CheckInput(const Matrix& x) const {
  Require(static_cast<std::size_t>(x.cols()) == input_width_, ErrorKind::kShape,
          "model expects " + std::to_string(input_width_) + " features, got " +
              std::to_string(x.cols()));
}

Standardizer Standardizer::Fit(const Matrix& x) {
  Standardizer s;
  const double n = static_cast<double>(std::max<Eigen::Index>(x.rows(), 1));
  s.mean = x.colwise().sum() / n;
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.scale(j) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Standardizer Standardizer::Identity(Eigen::Index width) {
  Standardizer s;
  s.mean = Eigen::RowVectorXd::Zero(width);
  s.scale = Eigen::RowVectorXd::Ones(width);
  return s;
}

Matrix Standardizer::Apply(const Matrix& x) const {
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

void Standardizer::Write(BlobWriter& out) const {
  out.Doubles({mean.data(), static_cast<std::size_t>(mean.size())});
  out.Doubles({scale.data(), static_cast<std::size_t>(scale.size())});
}

Standardizer Standardizer::Read(BlobReader& in) {
  Standardizer s;
  const auto mean = in.Doubles();
  const auto scale = in.Doubles();
  Require(mean.size() == scale.size(), ErrorKind::kParse, "standardizer width mismatch");
  s.mean = Eigen::Map<const Eigen::RowVectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.scale = Eigen::Map<const Eigen::RowVectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  return s;
}

Matrix Softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      out(i, c) = std::exp(logits(i, c) - peak);
      total += out(i, c);
    }
    out.row(i) /= total;
  }
  return out;
}

double LogLoss(const Matrix& probabilities, const Targets& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = probabilities(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y.values[i]));
    total -= std::log(std::clamp(p, 1e-15, 1.0));
  }
  return y.size() == 0 ? 0.0 : total / static_cast<double>(y.size());
}

double MeanSquaredError(const Matrix& predictions, const Matrix& targets) {
  if (predictions.size() == 0) return 0.0;
  return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

namespace {

// Mean target for regression, class frequencies for classification.
class ConstantModel final : public TrainedModel {
 public:
  explicit ConstantModel(Eigen::RowVectorXd output) : output_(std::move(output)) {}

  ModelFamily family() const override { return ModelFamily::kConstant; }

  Matrix PredictMatrix(const Matrix& x) const override {
    CheckInput(x);
    return output_.replicate(x.rows(), 1);
  }

  void WriteParameters(BlobWriter& out) const override {
    out.Doubles({output_.data(), static_cast<std::size_t>(output_.size())});
  }

 private:
  Eigen::RowVectorXd output_;
};

Eigen::RowVectorXd ConstantOutput(const Targets& y) {
  if (y.task == Task::kRegression) {
    Eigen::RowVectorXd out(1);
    double total = 0.0;
    for (double v : y.values) total += v;
    out(0) = y.values.empty() ? 0.0 : total / static_cast<double>(y.values.size());
    return out;
  }
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(y.num_classes));
  for (double v : y.values) out(static_cast<Eigen::Index>(v)) += 1.0;
  if (!y.values.empty()) out /= static_cast<double>(y.values.size());
  return out;
}

void ValidateTargets(const Matrix& x, const Targets& y) {
  Require(static_cast<std::size_t>(x.rows()) == y.size(), ErrorKind::kShape,
          "feature rows (" + std::to_string(x.rows()) + ") do not match targets (" +
              std::to_string(y.size()) + ")");
  Require(y.size() > 0, ErrorKind::kData, "cannot train on zero rows");
  Require(x.allFinite(), ErrorKind::kData, "training features contain non-finite values");
  if (y.task == Task::kClassification) {
    Require(y.num_classes >= 2, ErrorKind::kConfig, "classification needs at least two classes");
    for (double v : y.values) {
      Require(v >= 0 && v < static_cast<double>(y.num_classes) && v == std::floor(v),
              ErrorKind::kData, "class index out of range");
    }
  } else {
    for (double v : y.values) Require(std::isfinite(v), ErrorKind::kData, "non-finite target");
  }
}

}  // namespace

std::unique_ptr<TrainedModel> TrainConstant(const ModelSpec&, const Matrix&, const Targets& y) {
  return std::make_unique<ConstantModel>(ConstantOutput(y));
}

std::unique_ptr<TrainedModel> ReadConstant(BlobReader& in) {
  const auto values = in.Doubles();
  return std::make_unique<ConstantModel>(
      Eigen::Map<const Eigen::RowVectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
}

ModelPtr Train(const ModelSpec& spec, const Matrix& x, const Targets& y) {
  spec.Validate(y.task);
  ValidateTargets(x, y);

  std::unique_ptr<TrainedModel> model;
  std::string degenerate;
  if (y.task == Task::kClassification && spec.family != ModelFamily::kConstant) {
    std::set<double> seen(y.values.begin(), y.values.end());
    if (seen.size() < 2) {
      degenerate = "only one class present in training data; " + ModelFamilyName(spec.family) +
                   " replaced by a constant predictor";
    }
  }
  if (!degenerate.empty()) {
    model = TrainConstant(spec, x, y);
    model->AddWarning(degenerate);
  } else {
    switch (spec.family) {
      case ModelFamily::kConstant: model = TrainConstant(spec, x, y); break;
      case ModelFamily::kRidgeLinear: model = TrainRidge(spec, x, y); break;
      case ModelFamily::kLogisticLinear: model = TrainLogistic(spec, x, y); break;
      case ModelFamily::kKnn: model = TrainKnn(spec, x, y); break;
      case ModelFamily::kGbdt: model = TrainGbdt(spec, x, y); break;
      case ModelFamily::kMlp: model = TrainMlp(spec, x, y); break;
    }
  }
  model->SetHeader(y.task, y.task == Task::kRegression ? 0 : y.num_classes,
                   static_cast<std::size_t>(x.cols()),
                   spec.tag.empty() ? ModelFamilyName(spec.family) : spec.tag);
  return model;
}

namespace {
constexpr std::uint8_t kMagic[4] = {'B', 'S', 'T', 'W'};
}  // namespace

std::vector<std::uint8_t> SerializeModel(const TrainedModel& model) {
  BlobWriter out;
  for (std::uint8_t b : kMagic) out.U8(b);
  out.U32(kModelFormatVersion);
  out.U8(static_cast<std::uint8_t>(model.family()));
  out.U8(model.task() == Task::kRegression ? 0 : 1);
  out.U64(model.num_classes());
  out.U64(model.input_width());
  out.String(model.tag());
  out.U64(model.warnings().size());
  for (const auto& w : model.warnings()) out.String(w);
  model.WriteParameters(out);
  return std::move(out.bytes());
}

ModelPtr DeserializeModel(std::span<const std::uint8_t> bytes) {
  BlobReader in(bytes);
  for (std::uint8_t b : kMagic) {
    Require(in.U8() == b, ErrorKind::kParse, "not a model container (bad magic)");
  }
  const std::uint32_t version = in.U32();
  Require(version == kModelFormatVersion, ErrorKind::kParse,
          "unsupported model format version " + std::to_string(version));
  const std::uint8_t family = in.U8();
  const std::uint8_t task = in.U8();
  Require(task <= 1, ErrorKind::kParse, "bad task tag");
  const std::uint64_t num_classes = in.U64();
  const std::uint64_t input_width = in.U64();
  std::string tag = in.String();
  std::vector<std::string> warnings(in.U64());
  for (auto& w : warnings) w = in.String();

  std::unique_ptr<TrainedModel> model;
  switch (static_cast<ModelFamily>(family)) {
    case ModelFamily::kConstant: model = ReadConstant(in); break;
    case ModelFamily::kRidgeLinear: model = ReadRidge(in); break;
    case ModelFamily::kLogisticLinear: model = ReadLogistic(in); break;
    case ModelFamily::kKnn: model = ReadKnn(in); break;
    case ModelFamily::kGbdt: model = ReadGbdt(in); break;
    case ModelFamily::kMlp: model = ReadMlp(in); break;
    default: Throw(ErrorKind::kParse, "unknown family tag " + std::to_string(family));
  }
  Require(in.AtEnd(), ErrorKind::kParse, "trailing bytes after model parameters");
  model->SetHeader(task == 0 ? Task::kRegression : Task::kClassification, num_classes,
                   input_width, std::move(tag));
  for (auto& w : warnings) model->AddWarning(std::move(w));
  return model;
}

void RosterConfig::SetOverride(std::size_t layer_index, std::vector<ModelSpec> roster) {
  overrides_[layer_index] = std::move(roster);
}

std::vector<ModelSpec> RosterConfig::LayerModels(std::size_t layer_index, Task task) const {
  if (auto it = overrides_.find(layer_index); it != overrides_.end()) return it->second;
  std::vector<ModelSpec> roster;
  roster.push_back(MakeSpec(ModelFamily::kGbdt));
  roster.push_back(MakeSpec(ModelFamily::kMlp));
  roster.push_back(task == Task::kRegression ? MakeSpec(ModelFamily::kRidgeLinear)
                                             : MakeSpec(ModelFamily::kLogisticLinear));
  if (layer_index > 0) roster.push_back(MakeSpec(ModelFamily::kKnn));
  return roster;
}

std::vector<ModelSpec> ListLayerModels(std::size_t layer_index, Task task,
                                       const RosterConfig& config) {
  return config.LayerModels(layer_index, task);
}

}  // namespace stackprop
