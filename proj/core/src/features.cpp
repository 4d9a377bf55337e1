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

#include "stackprop/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "stackprop/error.hpp"
#include "stackprop/rng.hpp"

namespace stackprop {

std::string ColumnKindName(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kNumeric: return "num";
    case ColumnKind::kCategorical: return "cat";
    case ColumnKind::kText: return "text";
  }
  return "num";
}

ColumnKind ParseColumnKind(const std::string& name) {
  if (name == "num" || name == "numeric") return ColumnKind::kNumeric;
  if (name == "cat" || name == "categorical") return ColumnKind::kCategorical;
  if (name == "text") return ColumnKind::kText;
  Throw(ErrorKind::kConfig, "unknown column kind '" + name + "'");
}

void FeatureTable::AddColumn(FeatureColumn column) {
  if (columns_.empty() && num_rows_ == 0) num_rows_ = column.size();
  Require(column.size() == num_rows_, ErrorKind::kShape,
          "column '" + column.name + "' has " + std::to_string(column.size()) + " rows, expected " +
              std::to_string(num_rows_));
  columns_.push_back(std::move(column));
}

void FeatureTable::AddNumeric(std::string name, std::vector<double> values) {
  FeatureColumn c;
  c.name = std::move(name);
  c.kind = ColumnKind::kNumeric;
  c.numeric = std::move(values);
  AddColumn(std::move(c));
}

void FeatureTable::AddCategorical(std::string name, std::vector<std::string> values) {
  FeatureColumn c;
  c.name = std::move(name);
  c.kind = ColumnKind::kCategorical;
  c.strings = std::move(values);
  AddColumn(std::move(c));
}

void FeatureTable::AddText(std::string name, std::vector<std::string> values) {
  FeatureColumn c;
  c.name = std::move(name);
  c.kind = ColumnKind::kText;
  c.strings = std::move(values);
  AddColumn(std::move(c));
}

std::size_t ColumnEncoding::width() const {
  switch (mode) {
    case Mode::kStandardize: return 1;
    case Mode::kOneHot: return levels.size();
    case Mode::kFrequency: return 1;
    case Mode::kHashedText: return buckets;
    case Mode::kDropped: return 0;
  }
  return 0;
}

std::size_t EncoderState::width() const {
  std::size_t total = 0;
  for (const auto& c : columns) total += c.width();
  return total;
}

std::vector<std::string> EncoderState::OutputNames() const {
  std::vector<std::string> names;
  for (const auto& c : columns) {
    switch (c.mode) {
      case ColumnEncoding::Mode::kStandardize:
      case ColumnEncoding::Mode::kFrequency:
        names.push_back(c.name);
        break;
      case ColumnEncoding::Mode::kOneHot:
        for (const auto& level : c.levels) names.push_back(c.name + "=" + level);
        break;
      case ColumnEncoding::Mode::kHashedText:
        for (std::size_t b = 0; b < c.buckets; ++b) names.push_back(c.name + "#" + std::to_string(b));
        break;
      case ColumnEncoding::Mode::kDropped:
        break;
    }
  }
  return names;
}

std::vector<std::string> Tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Matrix EncoderState::Apply(const FeatureTable& table) const {
  const auto rows = static_cast<Eigen::Index>(table.num_rows());
  Matrix out = Matrix::Zero(rows, static_cast<Eigen::Index>(width()));
  Require(table.columns().size() == columns.size(), ErrorKind::kShape,
          "encoder fitted on " + std::to_string(columns.size()) + " columns, table has " +
              std::to_string(table.columns().size()));
  Eigen::Index at = 0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const ColumnEncoding& enc = columns[c];
    const FeatureColumn& col = table.columns()[c];
    Require(col.name == enc.name, ErrorKind::kShape,
            "column '" + col.name + "' does not match encoder column '" + enc.name + "'");
    switch (enc.mode) {
      case ColumnEncoding::Mode::kStandardize:
        for (Eigen::Index i = 0; i < rows; ++i) {
          double v = col.numeric[static_cast<std::size_t>(i)];
          if (!std::isfinite(v)) v = enc.mean;
          out(i, at) = (v - enc.mean) / enc.scale;
        }
        break;
      case ColumnEncoding::Mode::kOneHot:
        for (Eigen::Index i = 0; i < rows; ++i) {
          const auto& v = col.strings[static_cast<std::size_t>(i)];
          auto it = std::lower_bound(enc.levels.begin(), enc.levels.end(), v);
          if (it != enc.levels.end() && *it == v) out(i, at + (it - enc.levels.begin())) = 1.0;
        }
        break;
      case ColumnEncoding::Mode::kFrequency:
        for (Eigen::Index i = 0; i < rows; ++i) {
          auto it = enc.frequencies.find(col.strings[static_cast<std::size_t>(i)]);
          out(i, at) = it == enc.frequencies.end() ? 0.0 : it->second;
        }
        break;
      case ColumnEncoding::Mode::kHashedText:
        for (Eigen::Index i = 0; i < rows; ++i) {
          for (const auto& token : Tokenize(col.strings[static_cast<std::size_t>(i)])) {
            out(i, at + static_cast<Eigen::Index>(HashString(token) % enc.buckets)) += 1.0;
          }
          const double norm = out.block(i, at, 1, static_cast<Eigen::Index>(enc.buckets)).norm();
          if (norm > 0.0) out.block(i, at, 1, static_cast<Eigen::Index>(enc.buckets)) /= norm;
        }
        break;
      case ColumnEncoding::Mode::kDropped:
        break;
    }
    at += static_cast<Eigen::Index>(enc.width());
  }
  return out;
}

EncodedFeatures EncodeFeatures(const FeatureTable& table, const std::vector<std::size_t>& fit_rows,
                               const EncoderOptions& options) {
  Require(!fit_rows.empty(), ErrorKind::kConfig, "encoder needs at least one fit row");
  for (std::size_t r : fit_rows) {
    Require(r < table.num_rows(), ErrorKind::kShape, "fit row out of range");
  }
  Require(options.text_buckets > 0, ErrorKind::kConfig, "text bucket count must be positive");
  EncoderState state;
  for (const FeatureColumn& col : table.columns()) {
    ColumnEncoding enc;
    enc.name = col.name;
    switch (col.kind) {
      case ColumnKind::kNumeric: {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t r : fit_rows) {
          if (std::isfinite(col.numeric[r])) {
            sum += col.numeric[r];
            ++count;
          }
        }
        if (count == 0) {
          enc.mode = ColumnEncoding::Mode::kDropped;
          state.warnings.push_back("column '" + col.name + "' is entirely missing; dropped");
          break;
        }
        enc.mode = ColumnEncoding::Mode::kStandardize;
        enc.mean = sum / static_cast<double>(count);
        // Imputed cells sit at the mean, so the spread uses all fit rows.
        double var = 0.0;
        for (std::size_t r : fit_rows) {
          const double v = std::isfinite(col.numeric[r]) ? col.numeric[r] : enc.mean;
          var += (v - enc.mean) * (v - enc.mean);
        }
        const double sd = std::sqrt(var / static_cast<double>(fit_rows.size()));
        enc.scale = sd > 1e-12 ? sd : 1.0;
        break;
      }
      case ColumnKind::kCategorical: {
        std::map<std::string, std::size_t> counts;
        for (std::size_t r : fit_rows) {
          if (!col.strings[r].empty()) ++counts[col.strings[r]];
        }
        if (counts.empty()) {
          enc.mode = ColumnEncoding::Mode::kDropped;
          state.warnings.push_back("column '" + col.name + "' is entirely missing; dropped");
          break;
        }
        if (counts.size() <= kMaxOneHotLevels) {
          enc.mode = ColumnEncoding::Mode::kOneHot;
          for (const auto& [level, n] : counts) enc.levels.push_back(level);
        } else {
          enc.mode = ColumnEncoding::Mode::kFrequency;
          for (const auto& [level, n] : counts) {
            enc.frequencies[level] = static_cast<double>(n) / static_cast<double>(fit_rows.size());
          }
        }
        break;
      }
      case ColumnKind::kText:
        enc.mode = ColumnEncoding::Mode::kHashedText;
        enc.buckets = options.text_buckets;
        break;
    }
    state.columns.push_back(std::move(enc));
  }
  EncodedFeatures out;
  out.values = state.Apply(table);
  out.state = std::move(state);
  return out;
}

}  // namespace stackprop
