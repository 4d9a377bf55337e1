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

#include "stackprop/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stackprop/error.hpp"

namespace stackprop {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string At(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::uint64_t ParseUnsigned(const std::string& text, std::size_t line, const char* what) {
  const std::string t = Trim(text);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  Require(ec == std::errc() && ptr == t.data() + t.size() && !t.empty(), ErrorKind::kParse,
          At(line) + "invalid " + what + " '" + t + "'");
  return value;
}

NodeId ParseNodeId(const std::string& text, std::size_t line) {
  const std::uint64_t value = ParseUnsigned(text, line, "node id");
  Require(value <= std::numeric_limits<NodeId>::max(), ErrorKind::kParse,
          At(line) + "node id out of range");
  return static_cast<NodeId>(value);
}

// Empty text is missing (NaN).
double ParseReal(const std::string& text, std::size_t line) {
  const std::string t = Trim(text);
  if (t.empty()) return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  Require(ec == std::errc() && ptr == t.data() + t.size(), ErrorKind::kParse,
          At(line) + "invalid number '" + t + "'");
  return value;
}

// Reads CSV records; quoted fields may span lines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  bool Next(std::vector<std::string>& fields) {
    std::string record;
    std::string line;
    bool open = false;
    while (std::getline(in_, line)) {
      ++line_;
      if (!open) record_line_ = line_;
      record += line;
      for (char ch : line) {
        if (ch == '"') open = !open;
      }
      if (open) {
        record.push_back('\n');
        continue;
      }
      if (Trim(record).empty()) {
        record.clear();
        continue;
      }
      fields = SplitCsvLine(record);
      return true;
    }
    Require(!open, ErrorKind::kParse, At(record_line_) + "unterminated quoted field");
    return false;
  }

  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

void RequireHeader(const std::vector<std::string>& header, const std::vector<std::string>& want,
                   const char* file) {
  bool ok = header.size() == want.size();
  for (std::size_t i = 0; ok && i < want.size(); ++i) ok = Trim(header[i]) == want[i];
  if (!ok) {
    std::string expected;
    for (const auto& w : want) expected += (expected.empty() ? "" : ",") + w;
    Throw(ErrorKind::kParse, std::string(file) + " header must be '" + expected + "'");
  }
}

std::string CsvQuote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  return out + "\"";
}

std::ifstream OpenIn(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(out.good(), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  return out;
}

// ---- JSON helpers -------------------------------------------------------

void CheckKeys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  Require(j.is_object(), ErrorKind::kConfig, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    Require(allowed.count(key) != 0, ErrorKind::kConfig,
            "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T Get(const json& j, const std::string& key, const T& fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    Throw(ErrorKind::kConfig, where + "." + key + ": " + e.what());
  }
}

fs::path ResolvePath(const fs::path& base, const std::string& text) {
  fs::path p(text);
  return p.is_absolute() ? p : base / p;
}

KernelSpec ParseKernelJson(const json& j, const std::string& kind_key,
                           const std::string& isolated_key, KernelSpec fallback,
                           const std::string& where) {
  KernelSpec spec = fallback;
  if (j.contains(kind_key)) spec.kind = ParseKernelKind(Get<std::string>(j, kind_key, "", where));
  if (j.contains(isolated_key)) {
    spec.isolated = ParseIsolatedNodePolicy(Get<std::string>(j, isolated_key, "", where));
  }
  return spec;
}

ModelSpec ParseModelJson(const json& j, const std::string& where) {
  CheckKeys(j, {"family", "tag", "hyperparameters"}, where);
  Require(j.contains("family"), ErrorKind::kConfig, where + " needs a family");
  ModelSpec spec;
  spec.family = ParseModelFamily(Get<std::string>(j, "family", "", where));
  spec.tag = Get<std::string>(j, "tag", "", where);
  if (j.contains("hyperparameters")) {
    Require(j["hyperparameters"].is_object(), ErrorKind::kConfig,
            where + ".hyperparameters must be an object");
    for (const auto& [key, value] : j["hyperparameters"].items()) {
      Require(value.is_number(), ErrorKind::kConfig,
              where + ".hyperparameters." + key + " must be a number");
      spec.hyperparameters[key] = value.get<double>();
    }
  }
  return spec;
}

json ModelToJson(const ModelSpec& spec) {
  json hp = json::object();
  for (const auto& [k, v] : spec.hyperparameters) hp[k] = v;
  return {{"family", ModelFamilyName(spec.family)}, {"tag", spec.tag}, {"hyperparameters", hp}};
}

CorrectSmoothConfig ParseCorrectSmooth(const json& j) {
  const std::string where = "correct_smooth";
  CheckKeys(j, {"correct", "correct_lambda", "correct_kernel", "correct_isolated", "smooth",
                "smooth_lambda", "smooth_kernel", "smooth_isolated", "num_propagation", "scale",
                "scale_mode", "workers"},
            where);
  CorrectSmoothConfig cfg;
  cfg.correct_enabled = Get<bool>(j, "correct", cfg.correct_enabled, where);
  cfg.correct_lambda = Get<double>(j, "correct_lambda", cfg.correct_lambda, where);
  cfg.correct_kernel =
      ParseKernelJson(j, "correct_kernel", "correct_isolated", cfg.correct_kernel, where);
  const bool smooth = Get<bool>(j, "smooth", true, where);
  if (!smooth || (j.contains("smooth_lambda") && j["smooth_lambda"].is_null())) {
    cfg.smooth_lambda.reset();
  } else {
    cfg.smooth_lambda = Get<double>(j, "smooth_lambda", *cfg.smooth_lambda, where);
  }
  cfg.smooth_kernel =
      ParseKernelJson(j, "smooth_kernel", "smooth_isolated", cfg.smooth_kernel, where);
  cfg.num_propagation = Get<std::size_t>(j, "num_propagation", cfg.num_propagation, where);
  const std::string mode = Get<std::string>(j, "scale_mode", "fixed", where);
  Require(mode == "fixed" || mode == "autoscale", ErrorKind::kConfig,
          "correct_smooth.scale_mode must be fixed or autoscale");
  cfg.scale_mode = mode == "fixed" ? ScaleMode::kFixed : ScaleMode::kAutoscale;
  cfg.scale = Get<double>(j, "scale", cfg.scale, where);
  cfg.workers = Get<std::size_t>(j, "workers", cfg.workers, where);
  cfg.Validate();
  return cfg;
}

json CorrectSmoothToJson(const CorrectSmoothConfig& cfg) {
  json j = {{"correct", cfg.correct_enabled},
            {"correct_lambda", cfg.correct_lambda},
            {"correct_kernel", KernelKindName(cfg.correct_kernel.kind)},
            {"correct_isolated", IsolatedNodePolicyName(cfg.correct_kernel.isolated)},
            {"smooth", cfg.smooth_lambda.has_value()},
            {"smooth_kernel", KernelKindName(cfg.smooth_kernel.kind)},
            {"smooth_isolated", IsolatedNodePolicyName(cfg.smooth_kernel.isolated)},
            {"num_propagation", cfg.num_propagation},
            {"scale_mode", cfg.scale_mode == ScaleMode::kFixed ? "fixed" : "autoscale"},
            {"scale", cfg.scale}};
  if (cfg.smooth_lambda) j["smooth_lambda"] = *cfg.smooth_lambda;
  return j;
}

void ParseStack(const json& j, StackConfig& cfg) {
  const std::string where = "stack";
  CheckKeys(j, {"num_layers", "folds", "repeats", "propagation", "step_subset",
                "include_raw_features", "bagging", "shared_fold_plan", "stratify",
                "selection_loss", "selection_rounds", "selection_set", "max_model_fits"},
            where);
  cfg.num_layers = Get<std::size_t>(j, "num_layers", cfg.num_layers, where);
  cfg.num_folds = Get<std::size_t>(j, "folds", cfg.num_folds, where);
  cfg.num_repeats = Get<std::size_t>(j, "repeats", cfg.num_repeats, where);
  if (j.contains("propagation")) {
    const json& p = j["propagation"];
    CheckKeys(p, {"lambda", "steps", "kernel", "isolated", "max_steps"}, "stack.propagation");
    cfg.propagation.lambda = Get<double>(p, "lambda", cfg.propagation.lambda, "stack.propagation");
    cfg.propagation.num_steps =
        Get<std::size_t>(p, "steps", cfg.propagation.num_steps, "stack.propagation");
    cfg.propagation.max_steps =
        Get<std::size_t>(p, "max_steps", cfg.propagation.max_steps, "stack.propagation");
    cfg.propagation.kernel =
        ParseKernelJson(p, "kernel", "isolated", cfg.propagation.kernel, "stack.propagation");
  }
  cfg.step_subset = Get<std::vector<std::size_t>>(j, "step_subset", cfg.step_subset, where);
  cfg.include_raw_features =
      Get<bool>(j, "include_raw_features", cfg.include_raw_features, where);
  cfg.bagging = Get<bool>(j, "bagging", cfg.bagging, where);
  cfg.shared_fold_plan = Get<bool>(j, "shared_fold_plan", cfg.shared_fold_plan, where);
  if (j.contains("stratify") && !j["stratify"].is_null()) {
    cfg.stratify = Get<bool>(j, "stratify", false, where);
  }
  if (j.contains("selection_loss") && !j["selection_loss"].is_null()) {
    cfg.selection_loss = ParseSelectionLoss(Get<std::string>(j, "selection_loss", "", where));
  }
  cfg.selection_rounds = Get<std::size_t>(j, "selection_rounds", cfg.selection_rounds, where);
  const std::string set = Get<std::string>(j, "selection_set", "oof", where);
  Require(set == "oof" || set == "validation", ErrorKind::kConfig,
          "stack.selection_set must be oof or validation");
  cfg.selection_set = set == "oof" ? SelectionSet::kOutOfFold : SelectionSet::kValidation;
  cfg.max_model_fits = Get<std::size_t>(j, "max_model_fits", cfg.max_model_fits, where);
}

json StackToJson(const StackConfig& cfg) {
  json j = {{"num_layers", cfg.num_layers},
            {"folds", cfg.num_folds},
            {"repeats", cfg.num_repeats},
            {"propagation",
             {{"lambda", cfg.propagation.lambda},
              {"steps", cfg.propagation.num_steps},
              {"max_steps", cfg.propagation.max_steps},
              {"kernel", KernelKindName(cfg.propagation.kernel.kind)},
              {"isolated", IsolatedNodePolicyName(cfg.propagation.kernel.isolated)}}},
            {"step_subset", cfg.step_subset},
            {"include_raw_features", cfg.include_raw_features},
            {"bagging", cfg.bagging},
            {"shared_fold_plan", cfg.shared_fold_plan},
            {"selection_rounds", cfg.selection_rounds},
            {"selection_set", cfg.selection_set == SelectionSet::kOutOfFold ? "oof" : "validation"},
            {"max_model_fits", cfg.max_model_fits}};
  if (cfg.stratify) j["stratify"] = *cfg.stratify;
  if (cfg.selection_loss) j["selection_loss"] = SelectionLossName(*cfg.selection_loss);
  return j;
}

json EncoderToJson(const EncoderState& state) {
  json cols = json::array();
  for (const auto& c : state.columns) {
    json col = {{"name", c.name}};
    switch (c.mode) {
      case ColumnEncoding::Mode::kStandardize:
        col["mode"] = "standardize";
        col["mean"] = c.mean;
        col["scale"] = c.scale;
        break;
      case ColumnEncoding::Mode::kOneHot:
        col["mode"] = "one_hot";
        col["levels"] = c.levels;
        break;
      case ColumnEncoding::Mode::kFrequency:
        col["mode"] = "frequency";
        col["frequencies"] = c.frequencies;
        break;
      case ColumnEncoding::Mode::kHashedText:
        col["mode"] = "hashed_text";
        col["buckets"] = c.buckets;
        break;
      case ColumnEncoding::Mode::kDropped:
        col["mode"] = "dropped";
        break;
    }
    cols.push_back(col);
  }
  return cols;
}

EncoderState EncoderFromJson(const json& cols) {
  EncoderState state;
  for (const auto& col : cols) {
    ColumnEncoding c;
    c.name = col.at("name").get<std::string>();
    const std::string mode = col.at("mode").get<std::string>();
    if (mode == "standardize") {
      c.mode = ColumnEncoding::Mode::kStandardize;
      c.mean = col.at("mean").get<double>();
      c.scale = col.at("scale").get<double>();
    } else if (mode == "one_hot") {
      c.mode = ColumnEncoding::Mode::kOneHot;
      c.levels = col.at("levels").get<std::vector<std::string>>();
    } else if (mode == "frequency") {
      c.mode = ColumnEncoding::Mode::kFrequency;
      c.frequencies = col.at("frequencies").get<std::map<std::string, double>>();
    } else if (mode == "hashed_text") {
      c.mode = ColumnEncoding::Mode::kHashedText;
      c.buckets = col.at("buckets").get<std::size_t>();
    } else if (mode == "dropped") {
      c.mode = ColumnEncoding::Mode::kDropped;
    } else {
      Throw(ErrorKind::kParse, "unknown encoder mode '" + mode + "'");
    }
    state.columns.push_back(std::move(c));
  }
  return state;
}

json ParseJsonText(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    Throw(ErrorKind::kConfig, what + " is not valid JSON: " + e.what());
  }
}

}  // namespace

// ---- Roles and datasets ---------------------------------------------------

std::string RoleName(Role role) {
  switch (role) {
    case Role::kTrain: return "train";
    case Role::kValid: return "valid";
    case Role::kTest: return "test";
  }
  return "train";
}

Role ParseRole(const std::string& name) {
  if (name == "train") return Role::kTrain;
  if (name == "valid" || name == "validation") return Role::kValid;
  if (name == "test") return Role::kTest;
  Throw(ErrorKind::kParse, "unknown role '" + name + "'");
}

std::vector<NodeId> Dataset::NodesWithRoles(const std::vector<Role>& wanted) const {
  std::vector<NodeId> out;
  for (std::size_t v = 0; v < roles.size(); ++v) {
    if (std::find(wanted.begin(), wanted.end(), roles[v]) != wanted.end()) {
      out.push_back(static_cast<NodeId>(v));
    }
  }
  return out;
}

LabelTable Dataset::TrainingLabels() const {
  LabelTable out = labels;
  for (std::size_t v = 0; v < out.num_nodes(); ++v) {
    if (roles[v] != Role::kTrain) {
      out.labeled_mask[v] = false;
      out.values[v] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (ch != '\r') {
      current.push_back(ch);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::vector<Edge> ReadEdgeList(std::istream& in) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a)) continue;
    Require(static_cast<bool>(fields >> b) && !(fields >> extra), ErrorKind::kParse,
            At(number) + "expected 'u v'");
    edges.emplace_back(ParseNodeId(a, number), ParseNodeId(b, number));
  }
  return edges;
}

FeatureTable ReadFeatureCsv(std::istream& in) {
  CsvReader reader(in);
  std::vector<std::string> header;
  Require(reader.Next(header), ErrorKind::kParse, "feature file is empty");
  Require(!header.empty() && Trim(header[0]) == "node_id", ErrorKind::kParse,
          "feature header must start with node_id");
  struct Spec {
    std::string name;
    ColumnKind kind;
  };
  std::vector<Spec> specs;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string h = Trim(header[c]);
    const auto colon = h.rfind(':');
    Require(colon != std::string::npos && colon > 0, ErrorKind::kParse,
            "feature column '" + h + "' must be written name:kind");
    try {
      specs.push_back({h.substr(0, colon), ParseColumnKind(h.substr(colon + 1))});
    } catch (const Error&) {
      Throw(ErrorKind::kParse, "feature column '" + h + "' has an unknown kind");
    }
  }
  std::vector<std::pair<NodeId, std::vector<std::string>>> rows;
  std::vector<std::string> fields;
  while (reader.Next(fields)) {
    Require(fields.size() == header.size(), ErrorKind::kParse,
            At(reader.line()) + "expected " + std::to_string(header.size()) + " fields, got " +
                std::to_string(fields.size()));
    const NodeId id = ParseNodeId(fields[0], reader.line());
    fields.erase(fields.begin());
    rows.emplace_back(id, std::move(fields));
    fields = {};
  }
  const std::size_t n = rows.size();
  std::vector<std::size_t> slot(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    const NodeId id = rows[r].first;
    Require(id < n, ErrorKind::kIntegrity,
            "feature ids must be 0.." + std::to_string(n == 0 ? 0 : n - 1) + ", found " +
                std::to_string(id));
    Require(slot[id] == n, ErrorKind::kIntegrity, "duplicate feature row for node " + std::to_string(id));
    slot[id] = r;
  }
  FeatureTable table(n);
  for (std::size_t c = 0; c < specs.size(); ++c) {
    FeatureColumn col;
    col.name = specs[c].name;
    col.kind = specs[c].kind;
    for (std::size_t v = 0; v < n; ++v) {
      const std::string& cell = rows[slot[v]].second[c];
      if (col.kind == ColumnKind::kNumeric) {
        col.numeric.push_back(ParseReal(cell, slot[v] + 2));
      } else {
        col.strings.push_back(cell);
      }
    }
    table.AddColumn(std::move(col));
  }
  return table;
}

LabelTable ReadLabelCsv(std::istream& in, std::size_t num_nodes, Task task,
                        std::size_t num_classes) {
  CsvReader reader(in);
  std::vector<std::string> fields;
  Require(reader.Next(fields), ErrorKind::kParse, "label file is empty");
  RequireHeader(fields, {"node_id", "label"}, "label file");
  LabelTable labels;
  labels.task = task;
  labels.values.assign(num_nodes, std::numeric_limits<double>::quiet_NaN());
  labels.labeled_mask.assign(num_nodes, false);
  double max_class = -1.0;
  while (reader.Next(fields)) {
    Require(fields.size() == 2, ErrorKind::kParse, At(reader.line()) + "expected node_id,label");
    const NodeId id = ParseNodeId(fields[0], reader.line());
    Require(id < num_nodes, ErrorKind::kIntegrity,
            "label for unknown node " + std::to_string(id));
    Require(!labels.labeled_mask[id], ErrorKind::kIntegrity,
            "duplicate label for node " + std::to_string(id));
    const double value = ParseReal(fields[1], reader.line());
    if (std::isnan(value)) continue;
    Require(std::isfinite(value), ErrorKind::kParse, At(reader.line()) + "label is not finite");
    if (task == Task::kClassification) {
      Require(value >= 0 && value == std::floor(value), ErrorKind::kParse,
              At(reader.line()) + "class labels must be non-negative integers");
      max_class = std::max(max_class, value);
    }
    labels.values[id] = value;
    labels.labeled_mask[id] = true;
  }
  if (task == Task::kClassification) {
    const auto inferred = static_cast<std::size_t>(max_class + 1.0);
    Require(num_classes == 0 || inferred <= num_classes, ErrorKind::kData,
            "class index exceeds num_classes");
    labels.num_classes = num_classes == 0 ? inferred : num_classes;
  }
  return labels;
}

std::vector<Role> ReadSplitCsv(std::istream& in, std::size_t num_nodes) {
  CsvReader reader(in);
  std::vector<std::string> fields;
  Require(reader.Next(fields), ErrorKind::kParse, "split file is empty");
  RequireHeader(fields, {"node_id", "role"}, "split file");
  std::vector<int> roles(num_nodes, -1);
  while (reader.Next(fields)) {
    Require(fields.size() == 2, ErrorKind::kParse, At(reader.line()) + "expected node_id,role");
    const NodeId id = ParseNodeId(fields[0], reader.line());
    Require(id < num_nodes, ErrorKind::kIntegrity, "split entry for unknown node " + std::to_string(id));
    Require(roles[id] < 0, ErrorKind::kIntegrity, "duplicate split entry for node " + std::to_string(id));
    try {
      roles[id] = static_cast<int>(ParseRole(Trim(fields[1])));
    } catch (const Error&) {
      Throw(ErrorKind::kParse, At(reader.line()) + "unknown role '" + Trim(fields[1]) + "'");
    }
  }
  std::vector<Role> out(num_nodes);
  std::string missing;
  std::size_t missing_count = 0;
  for (std::size_t v = 0; v < num_nodes; ++v) {
    if (roles[v] < 0) {
      if (missing_count++ < 10) missing += (missing.empty() ? "" : ", ") + std::to_string(v);
      continue;
    }
    out[v] = static_cast<Role>(roles[v]);
  }
  Require(missing_count == 0, ErrorKind::kIntegrity,
          std::to_string(missing_count) + " node(s) missing from the split file: " + missing);
  return out;
}

Dataset LoadDataset(const DatasetPaths& paths, Task task, std::size_t num_classes) {
  Dataset data;
  {
    auto in = OpenIn(paths.features);
    try {
      data.features = ReadFeatureCsv(in);
    } catch (const Error& e) {
      Throw(e.kind(), paths.features.string() + ": " + e.what());
    }
  }
  const std::size_t n = data.features.num_rows();
  Require(n > 0, ErrorKind::kData, "feature file has no rows");
  std::vector<Edge> edges;
  {
    auto in = OpenIn(paths.edges);
    try {
      edges = ReadEdgeList(in);
    } catch (const Error& e) {
      Throw(e.kind(), paths.edges.string() + ": " + e.what());
    }
  }
  std::set<NodeId> unknown;
  for (const auto& [u, v] : edges) {
    if (u >= n) unknown.insert(u);
    if (v >= n) unknown.insert(v);
  }
  if (!unknown.empty()) {
    std::string list;
    std::size_t shown = 0;
    for (NodeId id : unknown) {
      if (shown++ == 10) {
        list += ", ...";
        break;
      }
      list += (list.empty() ? "" : ", ") + std::to_string(id);
    }
    Throw(ErrorKind::kIntegrity, "edge list references nodes without features: " + list);
  }
  data.graph = Graph::FromEdges(n, edges);
  {
    auto in = OpenIn(paths.labels);
    data.labels = ReadLabelCsv(in, n, task, num_classes);
  }
  {
    auto in = OpenIn(paths.split);
    data.roles = ReadSplitCsv(in, n);
  }
  Require(!data.NodesWithRoles({Role::kTrain}).empty(), ErrorKind::kIntegrity,
          "split has no training nodes");
  for (NodeId v : data.NodesWithRoles({Role::kTrain})) {
    Require(data.labels.labeled_mask[v], ErrorKind::kIntegrity,
            "training node " + std::to_string(v) + " has no label");
  }
  return data;
}

void WriteEdgeList(std::ostream& out, const Graph& graph) {
  for (const auto& [u, v] : graph.EdgeList()) out << u << ' ' << v << '\n';
}

void WriteFeatureCsv(std::ostream& out, const FeatureTable& table) {
  out << "node_id";
  for (const auto& c : table.columns()) out << ',' << CsvQuote(c.name + ":" + ColumnKindName(c.kind));
  out << '\n';
  for (std::size_t v = 0; v < table.num_rows(); ++v) {
    out << v;
    for (const auto& c : table.columns()) {
      out << ',';
      if (c.kind == ColumnKind::kNumeric) {
        if (std::isfinite(c.numeric[v])) out << FormatDouble(c.numeric[v]);
      } else {
        out << CsvQuote(c.strings[v]);
      }
    }
    out << '\n';
  }
}

void WriteLabelCsv(std::ostream& out, const LabelTable& labels) {
  out << "node_id,label\n";
  for (std::size_t v = 0; v < labels.num_nodes(); ++v) {
    if (!labels.labeled_mask[v]) continue;
    out << v << ',';
    if (labels.task == Task::kClassification) {
      out << static_cast<long long>(labels.values[v]);
    } else {
      out << FormatDouble(labels.values[v]);
    }
    out << '\n';
  }
}

void WriteSplitCsv(std::ostream& out, const std::vector<Role>& roles) {
  out << "node_id,role\n";
  for (std::size_t v = 0; v < roles.size(); ++v) out << v << ',' << RoleName(roles[v]) << '\n';
}

std::string FormatDouble(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  std::string text(buffer, result.ptr);
  if (std::isfinite(value) && text.find_first_of(".e") == std::string::npos) text += ".0";
  return text;
}

void WritePredictionCsv(std::ostream& out, const Matrix& values, const std::vector<NodeId>& nodes) {
  out << "node_id";
  if (values.cols() == 1) {
    out << ",prediction";
  } else {
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << ",p" << j;
  }
  out << '\n';
  for (NodeId v : nodes) {
    Require(static_cast<Eigen::Index>(v) < values.rows(), ErrorKind::kShape,
            "no prediction row for node " + std::to_string(v));
    out << v;
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << ',' << FormatDouble(values(v, j));
    out << '\n';
  }
}

PredictionTable ReadPredictionCsv(std::istream& in) {
  CsvReader reader(in);
  std::vector<std::string> header;
  Require(reader.Next(header), ErrorKind::kParse, "prediction file is empty");
  Require(header.size() >= 2 && Trim(header[0]) == "node_id", ErrorKind::kParse,
          "prediction header must start with node_id and hold at least one value column");
  const auto width = static_cast<Eigen::Index>(header.size() - 1);
  std::vector<std::vector<double>> rows;
  PredictionTable table;
  std::vector<std::string> fields;
  while (reader.Next(fields)) {
    Require(fields.size() == header.size(), ErrorKind::kParse,
            At(reader.line()) + "wrong number of fields");
    table.nodes.push_back(ParseNodeId(fields[0], reader.line()));
    std::vector<double> row;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const double value = ParseReal(fields[j], reader.line());
      Require(std::isfinite(value), ErrorKind::kParse, At(reader.line()) + "missing prediction");
      row.push_back(value);
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < width; ++j) {
      table.values(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    }
  }
  return table;
}

// ---- Configuration ------------------------------------------------------

RunConfig ParseRunConfig(const std::string& json_text, const fs::path& base_dir) {
  json j = ParseJsonText(json_text, "config");
  CheckKeys(j, {"dataset", "task", "num_classes", "stack", "rosters", "correct_smooth", "metric",
                "output_dir", "seed", "workers", "text_buckets", "ablation"},
            "config");
  RunConfig cfg;
  Require(j.contains("dataset"), ErrorKind::kConfig, "config needs a dataset section");
  const json& d = j["dataset"];
  CheckKeys(d, {"edges", "features", "labels", "split"}, "dataset");
  for (const char* key : {"edges", "features", "labels", "split"}) {
    Require(d.contains(key) && d[key].is_string(), ErrorKind::kConfig,
            std::string("dataset.") + key + " must be a path");
  }
  cfg.dataset.edges = ResolvePath(base_dir, d["edges"].get<std::string>());
  cfg.dataset.features = ResolvePath(base_dir, d["features"].get<std::string>());
  cfg.dataset.labels = ResolvePath(base_dir, d["labels"].get<std::string>());
  cfg.dataset.split = ResolvePath(base_dir, d["split"].get<std::string>());
  cfg.task = ParseTask(Get<std::string>(j, "task", "regression", "config"));
  cfg.num_classes = Get<std::size_t>(j, "num_classes", 0, "config");
  if (j.contains("stack")) ParseStack(j["stack"], cfg.stack);
  cfg.stack.seed = Get<std::uint64_t>(j, "seed", 0, "config");
  cfg.stack.workers = Get<std::size_t>(j, "workers", 1, "config");
  cfg.text_buckets = Get<std::size_t>(j, "text_buckets", cfg.text_buckets, "config");
  Require(cfg.text_buckets >= 1, ErrorKind::kConfig, "text_buckets must be positive");
  if (j.contains("rosters")) {
    Require(j["rosters"].is_array(), ErrorKind::kConfig, "rosters must be an array of layers");
    for (std::size_t l = 0; l < j["rosters"].size(); ++l) {
      const json& layer = j["rosters"][l];
      Require(layer.is_array(), ErrorKind::kConfig, "each roster must be an array of models");
      std::vector<ModelSpec> roster;
      for (std::size_t m = 0; m < layer.size(); ++m) {
        roster.push_back(ParseModelJson(
            layer[m], "rosters[" + std::to_string(l) + "][" + std::to_string(m) + "]"));
      }
      cfg.rosters.push_back(std::move(roster));
    }
  } else {
    for (std::size_t l = 0; l < cfg.stack.num_layers; ++l) {
      cfg.rosters.push_back(ListLayerModels(l, cfg.task));
    }
  }
  Require(cfg.rosters.size() == cfg.stack.num_layers, ErrorKind::kConfig,
          "config lists " + std::to_string(cfg.rosters.size()) + " rosters for " +
              std::to_string(cfg.stack.num_layers) + " layers");
  for (const auto& roster : cfg.rosters) {
    for (const auto& spec : roster) spec.Validate(cfg.task);
  }
  if (j.contains("correct_smooth") && !j["correct_smooth"].is_null()) {
    cfg.correct_smooth = ParseCorrectSmooth(j["correct_smooth"]);
  }
  if (j.contains("metric") && !j["metric"].is_null()) {
    cfg.metric = ParseMetric(Get<std::string>(j, "metric", "", "config"));
  }
  cfg.output_dir = ResolvePath(base_dir, Get<std::string>(j, "output_dir", "out", "config"));
  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    CheckKeys(a, {"steps", "seeds"}, "ablation");
    cfg.ablation_steps = Get<std::vector<std::size_t>>(a, "steps", cfg.ablation_steps, "ablation");
    cfg.ablation_seeds = Get<std::vector<std::uint64_t>>(a, "seeds", cfg.ablation_seeds, "ablation");
  }
  cfg.stack.Validate();

  // Canonical echo with resolved paths so the record re-runs from anywhere.
  json echo = j;
  echo["dataset"] = {{"edges", cfg.dataset.edges.string()},
                     {"features", cfg.dataset.features.string()},
                     {"labels", cfg.dataset.labels.string()},
                     {"split", cfg.dataset.split.string()}};
  echo["output_dir"] = cfg.output_dir.string();
  echo["stack"] = StackToJson(cfg.stack);
  json rosters = json::array();
  for (const auto& roster : cfg.rosters) {
    json layer = json::array();
    for (const auto& spec : roster) layer.push_back(ModelToJson(spec));
    rosters.push_back(layer);
  }
  echo["rosters"] = rosters;
  echo["task"] = TaskName(cfg.task);
  echo["seed"] = cfg.stack.seed;
  cfg.echo = echo.dump();
  return cfg;
}

RunConfig LoadRunConfig(const fs::path& path) {
  return ParseRunConfig(ReadTextFile(path), fs::absolute(path).parent_path());
}

LeakLabConfig ParseLeakLabConfig(const std::string& json_text, const fs::path& base_dir) {
  const std::string where = "leaklab config";
  json j = ParseJsonText(json_text, where);
  CheckKeys(j, {"instances", "nodes", "edge_prob", "gmrf_alpha", "beta", "seed", "order_a",
                "trials", "features", "label_weight", "label_noise", "clip", "model",
                "bound_variance", "workers", "output_dir"},
            where);
  LeakLabConfig cfg;
  cfg.num_instances = Get<std::size_t>(j, "instances", cfg.num_instances, where);
  cfg.num_nodes = Get<std::size_t>(j, "nodes", cfg.num_nodes, where);
  cfg.edge_prob = Get<double>(j, "edge_prob", cfg.edge_prob, where);
  cfg.gmrf_alpha = Get<double>(j, "gmrf_alpha", cfg.gmrf_alpha, where);
  cfg.beta = Get<double>(j, "beta", cfg.beta, where);
  cfg.seed = Get<std::uint64_t>(j, "seed", cfg.seed, where);
  auto& e = cfg.experiment;
  e.order_a = Get<double>(j, "order_a", e.order_a, where);
  e.trials = Get<std::size_t>(j, "trials", e.trials, where);
  e.num_features = Get<std::size_t>(j, "features", e.num_features, where);
  e.label_weight = Get<double>(j, "label_weight", e.label_weight, where);
  e.label_noise = Get<double>(j, "label_noise", e.label_noise, where);
  if (j.contains("clip")) {
    if (j["clip"].is_null()) e.clip.reset();
    else e.clip = Get<double>(j, "clip", 0.5, where);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    if (m.is_string()) {
      Require(m.get<std::string>() == "identity", ErrorKind::kConfig,
              "leaklab model must be \"identity\" or a model object");
      e.model = LabModel::Identity();
    } else {
      e.model = LabModel::Trained(ParseModelJson(m, "leaklab model"));
    }
  }
  const std::string bound = Get<std::string>(j, "bound_variance", "min_diagonal", where);
  Require(bound == "min_diagonal" || bound == "max_diagonal", ErrorKind::kConfig,
          "bound_variance must be min_diagonal or max_diagonal");
  e.bound_variance =
      bound == "min_diagonal" ? BoundVariance::kMinDiagonal : BoundVariance::kMaxDiagonal;
  e.workers = Get<std::size_t>(j, "workers", e.workers, where);
  cfg.output_dir = ResolvePath(base_dir, Get<std::string>(j, "output_dir", "leaklab", where));
  Require(cfg.num_instances >= 1, ErrorKind::kConfig, "instances must be at least 1");
  return cfg;
}

// ---- Manifest -------------------------------------------------------------

Manifest::Manifest(const fs::path& path) : path_(path) { OpenOut(path_); }

void Manifest::Write(const std::string& json_line) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  Require(out.good(), ErrorKind::kIo, "cannot append to '" + path_.string() + "'");
  out << json_line << '\n';
}

void Manifest::Config(const std::string& echo) {
  Write(json{{"record", "config"}, {"config", json::parse(echo)}}.dump());
}

void Manifest::Layer(const LayerState& state) {
  json models = json::array();
  for (const auto& m : state.models) {
    models.push_back({{"tag", m.spec.tag},
                      {"family", ModelFamilyName(m.spec.family)},
                      {"oof_loss", m.oof_loss},
                      {"seconds", m.seconds},
                      {"copies", m.bagged.copies.size()},
                      {"warnings", m.bagged.warnings}});
  }
  Write(json{{"record", "layer"},
             {"layer", state.layer_index},
             {"input_width", state.input.cols()},
             {"seconds", state.seconds},
             {"models", models}}
            .dump());
}

void Manifest::Weights(const EnsembleWeights& weights) {
  Write(json{{"record", "ensemble"},
             {"weights", weights.weights},
             {"iterations", weights.iterations},
             {"loss", weights.loss},
             {"best_single_loss", weights.best_single_loss}}
            .dump());
}

void Manifest::Metric(const std::string& split, stackprop::Metric metric, double value) {
  Write(json{{"record", "metric"}, {"split", split}, {"metric", MetricName(metric)}, {"value", value}}
            .dump());
}

void Manifest::Note(const std::string& key, const std::string& value) {
  Write(json{{"record", "note"}, {"key", key}, {"value", value}}.dump());
}

// ---- Model directory ------------------------------------------------------

std::string ReadTextFile(const fs::path& path) {
  auto in = OpenIn(path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void SaveModelDir(const fs::path& dir, const FinalPredictor& predictor,
                  const EncoderState& encoder, const Graph& graph, const LabelTable& labels,
                  const std::optional<CorrectSmoothConfig>& correct_smooth) {
  std::error_code ec;
  fs::create_directories(dir / "copies", ec);
  Require(!ec, ErrorKind::kIo, "cannot create '" + (dir / "copies").string() + "'");
  fs::create_directories(dir / "stacker", ec);
  Require(!ec, ErrorKind::kIo, "cannot create '" + (dir / "stacker").string() + "'");

  json layers = json::array();
  for (std::size_t l = 0; l < predictor.layers.size(); ++l) {
    json layer = json::array();
    for (std::size_t m = 0; m < predictor.layers[l].size(); ++m) {
      const StackedModel& model = predictor.layers[l][m];
      const std::string stem = "L" + std::to_string(l) + "_M" + std::to_string(m);
      json copies = json::array();
      for (std::size_t c = 0; c < model.copies.size(); ++c) {
        const std::string name = "copies/" + stem + "_C" + std::to_string(c) + ".bstw";
        const auto bytes = SerializeModel(*model.copies[c]);
        auto out = OpenOut(dir / name);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        Require(out.good(), ErrorKind::kIo, "failed writing '" + (dir / name).string() + "'");
        copies.push_back(name);
      }
      const std::string base_name = "stacker/" + stem + ".csv";
      {
        Matrix rows = Matrix::Zero(static_cast<Eigen::Index>(predictor.num_nodes),
                                   model.labeled_base.cols());
        for (std::size_t i = 0; i < predictor.labeled_nodes.size(); ++i) {
          rows.row(predictor.labeled_nodes[i]) = model.labeled_base.row(static_cast<Eigen::Index>(i));
        }
        auto out = OpenOut(dir / base_name);
        WritePredictionCsv(out, rows, predictor.labeled_nodes);
      }
      json entry = ModelToJson(model.spec);
      entry["copies"] = copies;
      entry["labeled_base"] = base_name;
      layer.push_back(entry);
    }
    layers.push_back(layer);
  }

  json meta = {{"format_version", 1},
               {"task", TaskName(predictor.task)},
               {"num_classes", predictor.num_classes},
               {"num_nodes", predictor.num_nodes},
               {"labeled_nodes", predictor.labeled_nodes},
               {"unlabeled_nodes", predictor.unlabeled_nodes},
               {"stack", StackToJson(predictor.config)},
               {"selections", predictor.weights.selections},
               {"selection_iterations", predictor.weights.iterations},
               {"weights", predictor.weights.weights},
               {"layers", layers},
               {"encoder", EncoderToJson(encoder)},
               {"graph", "graph.edges"},
               {"labels", "labels.csv"}};
  meta["correct_smooth"] = correct_smooth ? CorrectSmoothToJson(*correct_smooth) : json(nullptr);
  {
    auto out = OpenOut(dir / "metadata.json");
    out << meta.dump(2) << '\n';
  }
  {
    auto out = OpenOut(dir / "graph.edges");
    out << "# nodes " << graph.num_nodes() << '\n';
    WriteEdgeList(out, graph);
  }
  {
    auto out = OpenOut(dir / "labels.csv");
    WriteLabelCsv(out, labels);
  }
}

LoadedModel LoadModelDir(const fs::path& dir) {
  json meta;
  try {
    meta = json::parse(ReadTextFile(dir / "metadata.json"));
  } catch (const json::parse_error& e) {
    Throw(ErrorKind::kParse, "metadata.json: " + std::string(e.what()));
  }
  try {
    Require(meta.at("format_version").get<int>() == 1, ErrorKind::kParse,
            "unsupported model directory version");
    LoadedModel out;
    FinalPredictor& p = out.predictor;
    p.task = ParseTask(meta.at("task").get<std::string>());
    p.num_classes = meta.at("num_classes").get<std::size_t>();
    p.num_nodes = meta.at("num_nodes").get<std::size_t>();
    p.labeled_nodes = meta.at("labeled_nodes").get<std::vector<NodeId>>();
    p.unlabeled_nodes = meta.at("unlabeled_nodes").get<std::vector<NodeId>>();
    ParseStack(meta.at("stack"), p.config);
    p.weights.selections = meta.at("selections").get<std::vector<std::string>>();
    p.weights.iterations = meta.at("selection_iterations").get<std::size_t>();
    Require(p.weights.iterations >= 1 && p.weights.iterations <= p.weights.selections.size(),
            ErrorKind::kIntegrity, "selection record is inconsistent");
    const auto stored = meta.at("weights").get<std::map<std::string, double>>();
    for (const auto& [tag, w] : stored) p.weights.weights[tag] = 0.0;
    for (std::size_t i = 0; i < p.weights.iterations; ++i) {
      Require(stored.count(p.weights.selections[i]) != 0, ErrorKind::kIntegrity,
              "selected model '" + p.weights.selections[i] + "' has no weight entry");
      p.weights.weights[p.weights.selections[i]] += 1.0;
    }
    for (auto& [tag, w] : p.weights.weights) w /= static_cast<double>(p.weights.iterations);

    const std::size_t width = p.width();
    for (const auto& layer : meta.at("layers")) {
      std::vector<StackedModel> models;
      for (const auto& entry : layer) {
        StackedModel model;
        json spec_json = {{"family", entry.at("family")},
                          {"tag", entry.at("tag")},
                          {"hyperparameters", entry.at("hyperparameters")}};
        model.spec = ParseModelJson(spec_json, "stored model");
        for (const auto& name : entry.at("copies")) {
          const std::string text = ReadTextFile(dir / name.get<std::string>());
          const std::vector<std::uint8_t> bytes(text.begin(), text.end());
          model.copies.push_back(DeserializeModel(bytes));
        }
        auto in = OpenIn(dir / entry.at("labeled_base").get<std::string>());
        const PredictionTable table = ReadPredictionCsv(in);
        Require(table.nodes == p.labeled_nodes &&
                    table.values.cols() == static_cast<Eigen::Index>(width),
                ErrorKind::kIntegrity, "stored stacker rows do not match the labeled nodes");
        model.labeled_base = table.values;
        models.push_back(std::move(model));
      }
      p.layers.push_back(std::move(models));
    }
    out.encoder = EncoderFromJson(meta.at("encoder"));
    {
      auto in = OpenIn(dir / meta.at("graph").get<std::string>());
      out.graph = Graph::FromEdges(p.num_nodes, ReadEdgeList(in));
    }
    {
      auto in = OpenIn(dir / meta.at("labels").get<std::string>());
      out.labels = ReadLabelCsv(in, p.num_nodes, p.task, p.num_classes);
    }
    if (!meta.at("correct_smooth").is_null()) {
      out.correct_smooth = ParseCorrectSmooth(meta["correct_smooth"]);
    }
    return out;
  } catch (const json::exception& e) {
    Throw(ErrorKind::kParse, "metadata.json: " + std::string(e.what()));
  }
}

}  // namespace stackprop
