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

#ifndef STACKPROP_FEATURES_HPP_
#define STACKPROP_FEATURES_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "stackprop/types.hpp"

namespace stackprop {

enum class ColumnKind { kNumeric, kCategorical, kText };

std::string ColumnKindName(ColumnKind kind);
// Accepts "num", "cat", "text" and the long forms.
ColumnKind ParseColumnKind(const std::string& name);

// Numeric cells hold NaN when missing; categorical and text cells hold the
// raw string (empty when missing).
struct FeatureColumn {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::vector<double> numeric;
  std::vector<std::string> strings;

  std::size_t size() const { return kind == ColumnKind::kNumeric ? numeric.size() : strings.size(); }
};

class FeatureTable {
 public:
  FeatureTable() = default;
  explicit FeatureTable(std::size_t num_rows) : num_rows_(num_rows) {}

  void AddNumeric(std::string name, std::vector<double> values);
  void AddCategorical(std::string name, std::vector<std::string> values);
  void AddText(std::string name, std::vector<std::string> values);
  void AddColumn(FeatureColumn column);

  std::size_t num_rows() const { return num_rows_; }
  const std::vector<FeatureColumn>& columns() const { return columns_; }

 private:
  std::size_t num_rows_ = 0;
  std::vector<FeatureColumn> columns_;
};

inline constexpr std::size_t kMaxOneHotLevels = 32;
inline constexpr std::size_t kDefaultTextBuckets = std::size_t{1} << 14;

// How one source column maps onto numeric output columns.
struct ColumnEncoding {
  enum class Mode { kStandardize, kOneHot, kFrequency, kHashedText, kDropped };

  std::string name;
  Mode mode = Mode::kStandardize;
  double mean = 0.0;    // kStandardize; also the imputation value
  double scale = 1.0;   // kStandardize
  std::vector<std::string> levels;              // kOneHot
  std::map<std::string, double> frequencies;    // kFrequency
  std::size_t buckets = 0;                      // kHashedText

  std::size_t width() const;
};

// Replayable encoder fitted on a subset of rows.
struct EncoderState {
  std::vector<ColumnEncoding> columns;
  std::vector<std::string> warnings;

  std::size_t width() const;
  std::vector<std::string> OutputNames() const;
  Matrix Apply(const FeatureTable& table) const;
};

struct EncodedFeatures {
  Matrix values;
  EncoderState state;
};

struct EncoderOptions {
  std::size_t text_buckets = kDefaultTextBuckets;
};

// Numeric columns are z-scored with mean and population deviation from
// fit_rows (missing cells imputed with that mean), categorical columns are
// one-hot encoded up to kMaxOneHotLevels levels and frequency encoded
// beyond, text columns become L2-normalized hashed bags of words.
EncodedFeatures EncodeFeatures(const FeatureTable& table, const std::vector<std::size_t>& fit_rows,
                               const EncoderOptions& options = {});

// Lower-cased alphanumeric tokens.
std::vector<std::string> Tokenize(const std::string& text);

}  // namespace stackprop

#endif  // STACKPROP_FEATURES_HPP_
