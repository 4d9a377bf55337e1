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

#ifndef STACKPROP_MODELS_HPP_
#define STACKPROP_MODELS_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stackprop/graph.hpp"
#include "stackprop/types.hpp"

namespace stackprop {

enum class ModelFamily : std::uint8_t {
  kConstant = 0,
  kRidgeLinear = 1,
  kLogisticLinear = 2,
  kKnn = 3,
  kGbdt = 4,
  kMlp = 5,
};

std::string ModelFamilyName(ModelFamily family);
ModelFamily ParseModelFamily(const std::string& name);

// Family, hyperparameters and seed of one base learner. Unset
// hyperparameters take the family defaults (see DefaultHyperparameters).
struct ModelSpec {
  ModelFamily family = ModelFamily::kConstant;
  std::string tag;
  std::map<std::string, double> hyperparameters;
  std::uint64_t seed = 0;

  // Value of `key`, falling back to the family default.
  double Get(const std::string& key) const;
  // Rejects unknown keys and out-of-range values.
  void Validate(Task task) const;
};

std::map<std::string, double> DefaultHyperparameters(ModelFamily family);

ModelSpec MakeSpec(ModelFamily family, std::string tag = {},
                   std::map<std::string, double> hyperparameters = {});

class BlobWriter;
class BlobReader;

// A fitted learner. Immutable after training and safe to share.
class TrainedModel {
 public:
  virtual ~TrainedModel() = default;

  virtual ModelFamily family() const = 0;

  Task task() const { return task_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t input_width() const { return input_width_; }
  std::size_t output_width() const { return task_ == Task::kRegression ? 1 : num_classes_; }
  const std::string& tag() const { return tag_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Class probabilities (rows sum to 1) for classification, values for
  // regression.
  virtual Matrix PredictMatrix(const Matrix& x) const = 0;
  PredictionFrame Predict(const Matrix& x) const;

  // Training objective after each boosting round or epoch; empty for
  // closed-form learners.
  virtual std::vector<double> TrainingLoss() const { return {}; }

  virtual void WriteParameters(BlobWriter& out) const = 0;

  void SetHeader(Task task, std::size_t num_classes, std::size_t input_width, std::string tag);
  void AddWarning(std::string warning) { warnings_.push_back(std::move(warning)); }

 protected:
  void CheckInput(const Matrix& x) const;

 private:
  Task task_ = Task::kRegression;
  std::size_t num_classes_ = 0;
  std::size_t input_width_ = 0;
  std::string tag_;
  std::vector<std::string> warnings_;
};

using ModelPtr = std::shared_ptr<const TrainedModel>;

// Fits `spec` on rows of x. Deterministic given spec.seed. Classification
// input with a single observed class yields a constant model carrying a
// warning.
ModelPtr Train(const ModelSpec& spec, const Matrix& x, const Targets& y);

// Versioned binary container: "BSTW", u32 version, u8 family, header, then
// the family parameter blob. Round trips are bit-exact.
inline constexpr std::uint32_t kModelFormatVersion = 1;
std::vector<std::uint8_t> SerializeModel(const TrainedModel& model);
ModelPtr DeserializeModel(std::span<const std::uint8_t> bytes);

// Per-layer model rosters. Defaults: layer 0 holds gbdt, mlp and the linear
// model matching the task; deeper layers add knn. Overrides are returned
// verbatim.
class RosterConfig {
 public:
  void SetOverride(std::size_t layer_index, std::vector<ModelSpec> roster);
  std::vector<ModelSpec> LayerModels(std::size_t layer_index, Task task) const;
  bool HasOverride(std::size_t layer_index) const { return overrides_.count(layer_index) != 0; }

 private:
  std::map<std::size_t, std::vector<ModelSpec>> overrides_;
};

std::vector<ModelSpec> ListLayerModels(std::size_t layer_index, Task task,
                                       const RosterConfig& config = {});

}  // namespace stackprop

#endif  // STACKPROP_MODELS_HPP_
