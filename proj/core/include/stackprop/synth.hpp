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

#ifndef STACKPROP_SYNTH_HPP_
#define STACKPROP_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "stackprop/io.hpp"

namespace stackprop {

// Homophilous stochastic block model with Gaussian field features.
//
// Classification: the label is the block id, optionally flipped with
// probability label_flip; informative features add +-signal by block.
// Regression: a field draw is smoothed over the graph (smooth_steps steps
// of lambda = smooth_lambda) and standardized to form the label;
// informative features are label + feature_noise noise.
// Remaining features are pure field noise.
struct SynthSpec {
  Task task = Task::kClassification;
  std::size_t num_nodes = 1000;
  std::size_t num_blocks = 2;
  double avg_degree = 10.0;
  double homophily = 0.9;  // expected share of within-block edges
  std::size_t num_features = 8;
  std::size_t informative_features = 4;
  double gmrf_alpha = 1.0;
  double beta = 2.0;
  double signal = 0.5;
  double label_flip = 0.0;
  double smooth_lambda = 0.9;
  std::size_t smooth_steps = 10;
  double feature_noise = 1.0;
  double label_noise = 0.1;
  double train_fraction = 0.5;
  double valid_fraction = 0.1;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  void Validate() const;
};

SynthSpec ParseSynthSpec(const std::string& json_text, const std::filesystem::path& base_dir);

Dataset Synthesize(const SynthSpec& spec);

// Writes edges.txt, features.csv, labels.csv and split.csv into `dir`.
DatasetPaths WriteDataset(const std::filesystem::path& dir, const Dataset& data);

}  // namespace stackprop

#endif  // STACKPROP_SYNTH_HPP_
