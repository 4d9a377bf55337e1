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

#include "stackprop_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stackprop/correct_smooth.hpp"
#include "stackprop/error.hpp"
#include "stackprop/features.hpp"
#include "stackprop/io.hpp"
#include "stackprop/leakage_lab.hpp"
#include "stackprop/metrics.hpp"
#include "stackprop/rng.hpp"
#include "stackprop/stacking.hpp"
#include "stackprop/synth.hpp"

namespace stackprop {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return kExitUsage;
    case ErrorKind::kShape:
    case ErrorKind::kData:
    case ErrorKind::kParse:
    case ErrorKind::kIntegrity:
    case ErrorKind::kIo:
      return kExitData;
    case ErrorKind::kSize:
    case ErrorKind::kNumeric:
    case ErrorKind::kPipeline:
      return kExitPipeline;
  }
  return kExitPipeline;
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  Require(!ec, ErrorKind::kIo, "cannot create '" + dir.string() + "'");
}

std::ofstream OpenOut(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(out.good(), ErrorKind::kIo, "cannot write '" + path.string() + "'");
  return out;
}

std::ifstream OpenIn(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorKind::kIo, "cannot open '" + path.string() + "'");
  return in;
}

std::vector<NodeId> AllNodes(std::size_t n) {
  std::vector<NodeId> nodes(n);
  std::iota(nodes.begin(), nodes.end(), NodeId{0});
  return nodes;
}

std::vector<std::size_t> AllRows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

struct Prepared {
  RunConfig config;
  Dataset data;
  EncodedFeatures encoded;
  LabelTable training;
};

Prepared Prepare(const std::string& config_path, std::size_t workers, std::ostream& err) {
  Prepared p;
  p.config = LoadRunConfig(config_path);
  if (workers > 0) {
    p.config.stack.workers = workers;
    if (p.config.correct_smooth) p.config.correct_smooth->workers = workers;
  }
  p.data = LoadDataset(p.config.dataset, p.config.task, p.config.num_classes);
  EncoderOptions options;
  options.text_buckets = p.config.text_buckets;
  p.encoded = EncodeFeatures(p.data.features, AllRows(p.data.num_nodes()), options);
  for (const auto& w : p.encoded.state.warnings) err << "warning: " << w << '\n';
  p.training = p.data.TrainingLabels();
  return p;
}

// Metric over labeled nodes of `role`; nullopt when there are none.
std::optional<double> RoleMetric(const Dataset& data, const Matrix& preds, Role role,
                                 Metric metric) {
  std::vector<NodeId> nodes;
  for (NodeId v : data.NodesWithRoles({role})) {
    if (data.labels.labeled_mask[v]) nodes.push_back(v);
  }
  if (nodes.empty()) return std::nullopt;
  return EvaluateMetric(preds, data.labels, nodes, metric);
}

int RunTrain(const std::string& config_path, std::size_t workers, std::ostream& out,
             std::ostream& err) {
  Prepared p = Prepare(config_path, workers, err);
  const RunConfig& cfg = p.config;
  EnsureDir(cfg.output_dir);
  Manifest manifest(cfg.output_dir / "manifest.jsonl");
  manifest.Config(cfg.echo);

  std::optional<SelectionSplit> validation;
  if (cfg.stack.selection_set == SelectionSet::kValidation) {
    SelectionSplit split;
    for (NodeId v : p.data.NodesWithRoles({Role::kValid})) {
      if (p.data.labels.labeled_mask[v]) split.nodes.push_back(v);
    }
    split.targets = p.data.labels.TargetsFor(split.nodes);
    validation = std::move(split);
  }
  FinalPredictor predictor =
      RunPipeline(p.data.graph, p.encoded.values, p.training, cfg.stack, cfg.rosters, validation);
  for (const auto& state : predictor.states) {
    manifest.Layer(state);
    for (const auto& m : state.models) {
      for (const auto& w : m.bagged.warnings) err << "warning: " << m.spec.tag << ": " << w << '\n';
    }
  }
  manifest.Weights(predictor.weights);

  PredictionFrame final_frame = predictor.output;
  if (cfg.correct_smooth) {
    CorrectSmoothResult cs = CorrectAndSmooth(final_frame, p.training, p.data.graph, *cfg.correct_smooth);
    for (const auto& w : cs.warnings) err << "warning: " << w << '\n';
    manifest.Note("correct_smooth_scale", FormatDouble(cs.scale));
    final_frame = std::move(cs.frame);
  }
  {
    auto file = OpenOut(cfg.output_dir / "predictions.csv");
    WritePredictionCsv(file, final_frame.values, AllNodes(p.data.num_nodes()));
    Require(file.good(), ErrorKind::kIo, "failed writing predictions");
  }
  SaveModelDir(cfg.output_dir / "model", predictor, p.encoded.state, p.data.graph, p.training,
               cfg.correct_smooth);

  const Metric metric = cfg.metric.value_or(DefaultMetric(cfg.task));
  for (Role role : {Role::kValid, Role::kTest}) {
    if (auto value = RoleMetric(p.data, final_frame.values, role, metric)) {
      manifest.Metric(RoleName(role), metric, *value);
      out << RoleName(role) << ' ' << MetricName(metric) << ' ' << FormatDouble(*value) << '\n';
    }
  }
  out << "wrote " << (cfg.output_dir / "predictions.csv").string() << '\n';
  return kExitOk;
}

int RunPredict(const std::string& model_dir, const std::string& features_path,
               const std::string& output, std::size_t workers, std::ostream& out) {
  LoadedModel model = LoadModelDir(model_dir);
  if (workers > 0) model.predictor.config.workers = workers;
  FeatureTable table;
  {
    auto in = OpenIn(features_path);
    table = ReadFeatureCsv(in);
  }
  const Matrix x = model.encoder.Apply(table);
  PredictionFrame frame = model.predictor.Predict(model.graph, x);
  if (model.correct_smooth) {
    if (workers > 0) model.correct_smooth->workers = workers;
    frame = CorrectAndSmooth(frame, model.labels, model.graph, *model.correct_smooth).frame;
  }
  const auto nodes = AllNodes(model.predictor.num_nodes);
  if (output.empty() || output == "-") {
    WritePredictionCsv(out, frame.values, nodes);
  } else {
    auto file = OpenOut(output);
    WritePredictionCsv(file, frame.values, nodes);
    Require(file.good(), ErrorKind::kIo, "failed writing predictions");
  }
  return kExitOk;
}

std::size_t MaxLabelId(const fs::path& path) {
  auto in = OpenIn(path);
  std::string line;
  std::getline(in, line);
  std::size_t max_id = 0;
  while (std::getline(in, line)) {
    const auto fields = SplitCsvLine(line);
    if (fields.empty() || fields[0].find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      max_id = std::max<std::size_t>(max_id, std::stoull(fields[0]));
    } catch (const std::exception&) {
      Throw(ErrorKind::kParse, "invalid node id '" + fields[0] + "' in " + path.string());
    }
  }
  return max_id;
}

int RunEvaluate(const std::string& preds_path, const std::string& labels_path,
                const std::string& split_path, const std::vector<std::string>& role_names,
                const std::string& metric_name, std::ostream& out) {
  PredictionTable preds;
  {
    auto in = OpenIn(preds_path);
    preds = ReadPredictionCsv(in);
  }
  Require(!preds.nodes.empty(), ErrorKind::kData, "prediction file has no rows");
  const Task task = preds.values.cols() == 1 ? Task::kRegression : Task::kClassification;
  std::size_t n = *std::max_element(preds.nodes.begin(), preds.nodes.end()) + 1;
  n = std::max(n, MaxLabelId(labels_path) + 1);
  LabelTable labels;
  {
    auto in = OpenIn(labels_path);
    labels = ReadLabelCsv(in, n, task,
                          task == Task::kRegression ? 0 : static_cast<std::size_t>(preds.values.cols()));
  }
  Matrix by_node = Matrix::Zero(static_cast<Eigen::Index>(n), preds.values.cols());
  std::vector<bool> predicted(n, false);
  for (std::size_t i = 0; i < preds.nodes.size(); ++i) {
    by_node.row(preds.nodes[i]) = preds.values.row(static_cast<Eigen::Index>(i));
    predicted[preds.nodes[i]] = true;
  }
  std::vector<bool> selected(n, true);
  if (!split_path.empty()) {
    std::vector<Role> wanted;
    for (const auto& r : role_names) wanted.push_back(ParseRole(r));
    if (wanted.empty()) wanted.push_back(Role::kTest);
    auto in = OpenIn(split_path);
    const std::vector<Role> roles = ReadSplitCsv(in, n);
    for (std::size_t v = 0; v < n; ++v) {
      selected[v] = std::find(wanted.begin(), wanted.end(), roles[v]) != wanted.end();
    }
  }
  std::vector<NodeId> nodes;
  for (std::size_t v = 0; v < n; ++v) {
    if (selected[v] && predicted[v] && labels.labeled_mask[v]) nodes.push_back(static_cast<NodeId>(v));
  }
  const Metric metric = metric_name.empty() ? DefaultMetric(task) : ParseMetric(metric_name);
  const double value = EvaluateMetric(by_node, labels, nodes, metric);
  out << MetricName(metric) << ' ' << FormatDouble(value) << '\n';
  return kExitOk;
}

int RunAblate(const std::string& config_path, std::size_t workers, std::ostream& out,
              std::ostream& err) {
  Prepared p = Prepare(config_path, workers, err);
  const RunConfig& cfg = p.config;
  std::vector<NodeId> eval_nodes;
  for (NodeId v : p.data.NodesWithRoles({Role::kTest})) {
    if (p.data.labels.labeled_mask[v]) eval_nodes.push_back(v);
  }
  const Metric metric = cfg.metric.value_or(DefaultMetric(cfg.task));
  const auto rows = RunAblation(p.data.graph, p.encoded.values, p.training, cfg.stack, cfg.rosters,
                                cfg.ablation_steps, {true, false}, cfg.ablation_seeds, p.data.labels,
                                eval_nodes, metric);
  EnsureDir(cfg.output_dir);
  auto file = OpenOut(cfg.output_dir / "ablation.csv");
  file << "steps,bagging,mean,std,seeds\n";
  out << "steps  " << MetricName(metric) << "(bagging)  " << MetricName(metric) << "(no bagging)\n";
  for (std::size_t t : cfg.ablation_steps) {
    const AblationRow* with = nullptr;
    const AblationRow* without = nullptr;
    for (const auto& row : rows) {
      if (row.steps != t) continue;
      (row.bagging ? with : without) = &row;
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%-5zu  %.4f +- %.4f  %.4f +- %.4f\n", t, with->mean,
                  with->stddev, without->mean, without->stddev);
    out << line;
  }
  for (const auto& row : rows) {
    file << row.steps << ',' << (row.bagging ? "true" : "false") << ',' << FormatDouble(row.mean)
         << ',' << FormatDouble(row.stddev) << ',' << row.values.size() << '\n';
  }
  return kExitOk;
}

int RunLeakLab(const std::string& config_path, std::size_t workers, std::ostream& out) {
  LeakLabConfig cfg =
      ParseLeakLabConfig(ReadTextFile(config_path), fs::absolute(config_path).parent_path());
  if (workers > 0) cfg.experiment.workers = workers;
  EnsureDir(cfg.output_dir);
  auto log = OpenOut(cfg.output_dir / "leaklab.jsonl");
  std::size_t within = 0;
  for (std::size_t i = 0; i < cfg.num_instances; ++i) {
    const LeakageInstance inst = MakeLeakageInstance(cfg.num_nodes, cfg.edge_prob, CombineSeed(cfg.seed, i));
    const GmrfModel field(inst.graph, cfg.gmrf_alpha, cfg.beta);
    LeakageExperimentConfig exp = cfg.experiment;
    exp.x0 = inst.x0;
    exp.chunk1 = inst.chunk1;
    exp.chunk2 = inst.chunk2;
    exp.removed = inst.removed;
    exp.seed = CombineSeed(cfg.seed, 0x10000 + i);
    const LeakageReport r = RunLeakageExperiment(field, exp);
    if (r.epsilon_hat <= r.epsilon_bound) ++within;
    char line[200];
    std::snprintf(line, sizeof(line),
                  "instance %zu  epsilon_hat %.4g  bound %.4g  sigma_sq %.4g  unbagged_gap %.4g%s\n",
                  i, r.epsilon_hat, r.epsilon_bound, r.sigma_sq, r.unbagged_gap,
                  r.degenerate ? "  (degenerate)" : "");
    out << line;
    log << json{{"instance", i},
                {"x0", inst.x0},
                {"removed", inst.removed},
                {"epsilon_hat", r.epsilon_hat},
                {"epsilon_bound", r.epsilon_bound},
                {"sigma_sq", r.sigma_sq},
                {"conditional_variances", r.conditional_variances},
                {"unbagged_gap", r.unbagged_gap},
                {"max_output_difference", r.max_output_difference},
                {"degenerate", r.degenerate}}
               .dump()
        << '\n';
  }
  out << within << '/' << cfg.num_instances << " instances within the bound\n";
  return kExitOk;
}

int RunSynth(const std::string& spec_path, std::ostream& out) {
  const SynthSpec spec =
      ParseSynthSpec(ReadTextFile(spec_path), fs::absolute(spec_path).parent_path());
  const Dataset data = Synthesize(spec);
  WriteDataset(spec.output_dir, data);
  out << "wrote " << data.num_nodes() << " nodes and " << data.graph.num_edges() << " edges to "
      << spec.output_dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int CliMain(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stacked, bagged graph-propagation learning for node prediction", "stackprop"};
  app.require_subcommand(1);
  std::size_t workers = 0;

  std::string config_path;
  auto* train = app.add_subcommand("train", "Run the stacking pipeline and write predictions");
  train->add_option("config", config_path, "JSON run configuration")->required();
  train->add_option("--workers", workers, "Worker threads (0: config value)");

  std::string model_dir, features_path, output;
  auto* predict = app.add_subcommand("predict", "Predict with a trained model directory");
  predict->add_option("model_dir", model_dir, "Directory written by train")->required();
  predict->add_option("features", features_path, "Feature CSV for the trained graph")->required();
  predict->add_option("-o,--output", output, "Output CSV (default: stdout)");
  predict->add_option("--workers", workers, "Worker threads");

  std::string preds_path, labels_path, split_path, metric_name;
  std::vector<std::string> roles;
  auto* evaluate = app.add_subcommand("evaluate", "Score a prediction file against labels");
  evaluate->add_option("predictions", preds_path, "Prediction CSV")->required();
  evaluate->add_option("labels", labels_path, "Label CSV")->required();
  evaluate->add_option("--split", split_path, "Split CSV restricting the scored nodes");
  evaluate->add_option("--roles", roles, "Roles to score with --split (default: test)")->delimiter(',');
  evaluate->add_option("--metric", metric_name, "mse or accuracy");

  auto* ablate = app.add_subcommand("ablate", "Propagation depth by bagging ablation");
  ablate->add_option("config", config_path, "JSON run configuration")->required();
  ablate->add_option("--workers", workers, "Worker threads");

  auto* leaklab = app.add_subcommand("leaklab", "Label leakage experiment on random graphs");
  leaklab->add_option("config", config_path, "JSON leakage lab configuration")->required();
  leaklab->add_option("--workers", workers, "Worker threads");

  std::string spec_path;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic graph dataset");
  synth->add_option("spec", spec_path, "JSON generator spec")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return RunTrain(config_path, workers, out, err);
    if (*predict) return RunPredict(model_dir, features_path, output, workers, out);
    if (*evaluate) return RunEvaluate(preds_path, labels_path, split_path, roles, metric_name, out);
    if (*ablate) return RunAblate(config_path, workers, out, err);
    if (*leaklab) return RunLeakLab(config_path, workers, out);
    if (*synth) return RunSynth(spec_path, out);
  } catch (const Error& e) {
    err << "stackprop: " << e.what() << '\n';
    return ExitCodeFor(e.kind());
  } catch (const std::exception& e) {
    err << "stackprop: " << e.what() << '\n';
    return kExitPipeline;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace stackprop
