// Copyright 2026 The dgmil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Batch command-line front end: generate, train, eval, ablate, inspect.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dgmil/dgmil.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string mode = "reproducible";
  bool quiet = false;

  // generate
  dgmil::SyntheticConfig synth;
  std::string out_dir = ".";

  // train / ablate hyperparameters
  std::size_t clusters = 10;
  double ratio = 0.10;
  std::size_t max_rounds = 20;
  std::size_t epochs = 200;
  double lr = 0.01;
  std::size_t batch_size = 0;
  std::string head_init = "identity";

  std::string train_path;
  std::string test_path;
  std::string model_path = "model.json";
  std::string log_path = "rounds.jsonl";
  std::string report_path = "report.jsonl";
  std::string curves_path;

  std::string axis = "ratio";
  std::string values;
  bool values_given = false;
  std::string sweep_csv = "ablation.csv";
  std::string sweep_json = "ablation.json";

  std::string inspect_path;
};

bool g_quiet = false;

void info(const std::string& line) {
  if (!g_quiet) std::cout << line << '\n';
}

void warn(const std::string& line) { std::cerr << "warning: " << line << '\n'; }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    dgmil::fail(dgmil::ErrorKind::kRuntime, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < length; ++k) {
    out += kHex[digest[k] >> 4];
    out += kHex[digest[k] & 0xf];
  }
  return out;
}

json synthetic_to_json(const dgmil::SyntheticConfig& c) {
  return {{"dim", c.dim},
          {"phenotypes", c.phenotypes},
          {"neg-bags", c.neg_bags},
          {"pos-bags", c.pos_bags},
          {"bag-size", c.bag_size},
          {"witness-rate", c.witness_rate},
          {"separation", c.separation},
          {"entangle", c.entangle},
          {"distractor-dims", c.distractor_dims},
          {"distractor-scale", c.distractor_scale},
          {"radius", c.radius},
          {"seed", c.seed}};
}

dgmil::RefinementConfig refinement_config(const Options& o) {
  dgmil::RefinementConfig c;
  c.clusters = o.clusters;
  c.ratio = o.ratio;
  c.max_rounds = o.max_rounds;
  c.training.max_epochs = o.epochs;
  c.training.learning_rate = o.lr;
  c.training.batch_size = o.batch_size;
  c.training.identity_init = o.head_init == "identity";
  c.seed = o.seed;
  c.mode = dgmil::parse_exec_mode(o.mode);
  return c;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  try {
    dgmil::write_file_atomic(path, text);
  } catch (const dgmil::Error& e) {
    throw dgmil::Error(e.kind(), path.string() + ": " + e.detail());
  }
}

dgmil::Dataset load_dataset(const std::string& path, const char* flag) {
  if (path.empty()) dgmil::fail(dgmil::ErrorKind::kPrecondition, std::string(flag) + " is required");
  return dgmil::read_feature_file(path);
}

// ---- generate ------------------------------------------------------------

int run_generate(Options& o) {
  o.synth.seed = o.seed;
  o.synth.validate();
  const auto split = dgmil::generate(o.synth);
  const fs::path dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);

  json files = json::object();
  for (const auto& [name, ds] : {std::pair{"train.dgmf", &split.train}, std::pair{"test.dgmf", &split.test}}) {
    const std::string bytes = dgmil::encode_dgmf(ds->instances, ds->bags);
    write_text(dir / name, bytes);
    files[name] = {{"sha256", sha256_hex(bytes)},
                   {"bytes", bytes.size()},
                   {"instances", ds->instances.size()},
                   {"bags", ds->bags.size()},
                   {"dim", ds->instances.dim()}};
  }
  json manifest = {{"version", dgmil::kVersion}, {"command", "generate"}, {"config", synthetic_to_json(o.synth)},
                   {"files", files}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  info(manifest.dump());
  return 0;
}

// ---- train ---------------------------------------------------------------

json round_record(const dgmil::RoundRecord& r, const json& config) {
  return {{"version", dgmil::kVersion},
          {"config", config},
          {"round", r.round},
          {"positives", r.selection.positives.size()},
          {"negatives", r.selection.negatives.size()},
          {"epochs", r.loss_curve.size()},
          {"final_loss", r.loss_curve.empty() ? json(nullptr) : json(r.loss_curve.back())},
          {"head_seed", r.head_seed},
          {"kmeans_seed", r.fit.kmeans_seed},
          {"inertia", r.fit.inertia},
          {"train_instance_auc", optional_number(r.fit.instance_auc)},
          {"train_bag_auc", optional_number(r.fit.bag_auc)}};
}

int run_train(Options& o) {
  const auto config = refinement_config(o);
  const auto train = load_dataset(o.train_path, "--train");
  const auto state = dgmil::refine(train.instances, train.bags, config);
  const auto bundle = dgmil::make_bundle(state, train.bags);

  const json config_json = dgmil::config_to_json(config);
  std::string log;
  for (const auto& r : state.rounds) log += round_record(r, config_json).dump() + "\n";
  write_text(o.log_path, log);
  write_text(o.model_path, dgmil::bundle_to_json(bundle).dump() + "\n");

  info(json{{"version", dgmil::kVersion},
            {"command", "train"},
            {"config", config_json},
            {"rounds", state.rounds_run()},
            {"converged", state.converged},
            {"initial_train_instance_auc", optional_number(state.initial.instance_auc)},
            {"train_instance_auc", optional_number(state.final_fit().instance_auc)},
            {"train_bag_auc", optional_number(state.final_fit().bag_auc)}}
           .dump());
  return 0;
}

// ---- eval ----------------------------------------------------------------

json report_record(const dgmil::ModelBundle& bundle, const dgmil::MetricsReport& report, const dgmil::BagTable& bags,
                   const Options& o) {
  json per_bag = json::array();
  for (std::size_t b = 0; b < bags.size(); ++b) {
    const double s = report.bag_scores[b];
    per_bag.push_back({{"id", bags.bags[b].id},
                       {"label", bags.bags[b].label},
                       {"score", s},
                       {"normalized", bundle.anchors.hi > bundle.anchors.lo ? json(dgmil::normalize_score(s, bundle.anchors))
                                                                            : json(nullptr)}});
  }
  json froc_ops = json::array();
  if (!report.froc_points.empty()) {
    for (double op : dgmil::kFrocOperatingPoints) {
      froc_ops.push_back({{"fp_per_bag", op}, {"sensitivity", dgmil::froc_sensitivity_at(report.froc_points, op)}});
    }
  }
  return {{"version", dgmil::kVersion},
          {"command", "eval"},
          {"config", dgmil::config_to_json(bundle.config)},
          {"inputs", {{"model", o.model_path}, {"data", o.test_path}}},
          {"metrics", dgmil::report_to_json(report)},
          {"froc_operating_points", froc_ops},
          {"bags", per_bag}};
}

std::string curves_csv(const dgmil::MetricsReport& report, const dgmil::InstanceSet& instances) {
  std::ostringstream out;
  out.precision(17);
  out << "curve,x,y\n";
  if (!instances.has_all_labels()) return out.str();
  const auto labels = dgmil::known_instance_labels(instances);
  if (dgmil::has_both_classes(labels)) {
    for (const auto& [fpr, tpr] : dgmil::roc_curve(report.instance_scores, labels)) out << "roc," << fpr << ',' << tpr << '\n';
  }
  for (const auto& p : report.froc_points) out << "froc," << p.fp_per_bag << ',' << p.sensitivity << '\n';
  return out.str();
}

int run_eval(Options& o) {
  if (o.model_path.empty()) dgmil::fail(dgmil::ErrorKind::kPrecondition, "--model is required");
  const auto bundle = dgmil::read_bundle(o.model_path);
  const auto data = load_dataset(o.test_path, "--data");
  if (!data.instances.has_all_labels()) warn("instance labels unknown in " + o.test_path + "; instance metrics omitted");
  const auto report = dgmil::evaluate(bundle, data.instances, data.bags);
  const json record = report_record(bundle, report, data.bags, o);
  write_text(o.report_path, record.dump() + "\n");
  if (!o.curves_path.empty()) write_text(o.curves_path, curves_csv(report, data.instances));
  info(json{{"command", "eval"}, {"metrics", record.at("metrics")}}.dump());
  return 0;
}

// ---- ablate --------------------------------------------------------------

std::vector<double> parse_grid(const std::string& axis, const std::string& text, bool given) {
  std::vector<double> values;
  if (!given) {
    if (axis == "ratio") return {0.01, 0.05, 0.10, 0.20, 0.30};
    return {1, 2, 5, 10, 20, 50};
  }
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    if (cell.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cell.size()) dgmil::fail(dgmil::ErrorKind::kPrecondition, "--values: cannot parse '" + cell + "'");
    values.push_back(v);
  }
  return values;
}

std::string cell_text(double v) { return dgmil::detail::format_double(v); }

void check_grid(const std::string& axis, const std::vector<double>& values) {
  if (values.empty()) dgmil::fail(dgmil::ErrorKind::kPrecondition, "--values: empty grid");
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double v = values[k];
    if (axis == "ratio" && !(v > 0.0 && v <= 0.5)) {
      dgmil::fail(dgmil::ErrorKind::kPrecondition, "--values: ratio " + cell_text(v) + " outside (0, 0.5]");
    }
    if (axis == "clusters" && !(v >= 1.0 && v == std::floor(v))) {
      dgmil::fail(dgmil::ErrorKind::kPrecondition, "--values: cluster count must be an integer >= 1");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (values[j] == v) dgmil::fail(dgmil::ErrorKind::kPrecondition, "--values: duplicate grid value");
    }
  }
}

struct SweepRow {
  double value = 0;
  std::uint64_t seed = 0;
  std::optional<double> instance_auc;
  std::optional<double> bag_auc;
  std::optional<double> bag_accuracy;
  std::optional<double> froc_score;
  std::size_t rounds = 0;
  bool converged = false;
  std::string error;
};

SweepRow run_cell(const Options& o, const dgmil::Dataset& train, const dgmil::Dataset& test, double value,
                  std::size_t index) {
  SweepRow row;
  row.value = value;
  auto config = refinement_config(o);
  const std::uint32_t axis_code = o.axis == "ratio" ? 0x7261u : 0x636cu;
  row.seed = dgmil::derive_seed(o.seed, {axis_code, static_cast<std::uint32_t>(index)});
  config.seed = row.seed;
  if (o.axis == "ratio") {
    config.ratio = value;
  } else {
    config.clusters = static_cast<std::size_t>(value);
  }
  try {
    const auto state = dgmil::refine(train.instances, train.bags, config);
    const auto bundle = dgmil::make_bundle(state, train.bags);
    const auto report = dgmil::evaluate(bundle, test.instances, test.bags);
    row.instance_auc = report.instance_auc;
    row.bag_auc = report.bag_auc;
    row.bag_accuracy = report.bag_accuracy;
    row.froc_score = report.froc_score;
    row.rounds = state.rounds_run();
    row.converged = state.converged;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

std::string csv_number(const std::optional<double>& v) { return v ? cell_text(*v) : std::string(); }

std::string csv_quote(const std::string& text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

int run_ablate(Options& o) {
  if (o.axis != "ratio" && o.axis != "clusters") {
    dgmil::fail(dgmil::ErrorKind::kPrecondition, "--axis must be ratio or clusters");
  }
  const auto values = parse_grid(o.axis, o.values, o.values_given);
  check_grid(o.axis, values);
  const auto base = refinement_config(o);
  const auto train = load_dataset(o.train_path, "--train");
  const auto test = load_dataset(o.test_path, "--test");

  std::vector<SweepRow> rows(values.size());
  dgmil::parallel_for(values.size(), base.mode, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) rows[k] = run_cell(o, train, test, values[k], k);
  });

  std::string csv = o.axis + ",seed,instance_auc,bag_auc,bag_accuracy,froc_score,rounds,converged,error\n";
  json table = json::array();
  for (const auto& r : rows) {
    csv += cell_text(r.value) + ',' + std::to_string(r.seed) + ',' + csv_number(r.instance_auc) + ',' +
           csv_number(r.bag_auc) + ',' + csv_number(r.bag_accuracy) + ',' + csv_number(r.froc_score) + ',' +
           std::to_string(r.rounds) + ',' + (r.converged ? "true" : "false") + ',' +
           (r.error.empty() ? std::string() : csv_quote(r.error)) + '\n';
    table.push_back({{o.axis, r.value},
                     {"seed", r.seed},
                     {"instance_auc", optional_number(r.instance_auc)},
                     {"bag_auc", optional_number(r.bag_auc)},
                     {"bag_accuracy", optional_number(r.bag_accuracy)},
                     {"froc_score", optional_number(r.froc_score)},
                     {"rounds", r.rounds},
                     {"converged", r.converged},
                     {"error", r.error.empty() ? json(nullptr) : json(r.error)}});
    if (!r.error.empty()) warn(o.axis + "=" + cell_text(r.value) + " failed: " + r.error);
  }
  json record = {{"version", dgmil::kVersion},
                 {"command", "ablate"},
                 {"config", dgmil::config_to_json(base)},
                 {"axis", o.axis},
                 {"values", values},
                 {"inputs", {{"train", o.train_path}, {"test", o.test_path}}},
                 {"rows", table}};
  write_text(o.sweep_csv, csv);
  write_text(o.sweep_json, record.dump() + "\n");
  info(record.dump());
  return 0;
}

// ---- inspect -------------------------------------------------------------

int run_inspect(Options& o) {
  const std::string bytes = dgmil::read_file_bytes(o.inspect_path);
  json out;
  if (!bytes.empty() && bytes.front() == '{') {
    const auto bundle = dgmil::read_bundle(o.inspect_path);
    out = {{"kind", "model"},
           {"version", dgmil::kVersion},
           {"config", dgmil::config_to_json(bundle.config)},
           {"dim", bundle.dim},
           {"rounds", bundle.heads.size()},
           {"clusters", bundle.cluster_model.clusters()},
           {"members", bundle.cluster_model.member_counts},
           {"anchors", {{"lo", bundle.anchors.lo}, {"hi", bundle.anchors.hi}}},
           {"threshold", bundle.threshold},
           {"converged", bundle.converged},
           {"train_instance_auc", optional_number(bundle.train_instance_auc)},
           {"train_bag_auc", optional_number(bundle.train_bag_auc)}};
  } else {
    const auto ds = dgmil::read_feature_file(o.inspect_path);
    std::size_t known = 0, positive = 0;
    for (auto l : ds.instances.labels) {
      known += l != dgmil::InstanceLabel::kUnknown;
      positive += l == dgmil::InstanceLabel::kPositive;
    }
    out = {{"kind", "dataset"},
           {"version", dgmil::kVersion},
           {"instances", ds.instances.size()},
           {"dim", ds.instances.dim()},
           {"bags", ds.bags.size()},
           {"positive_bags", ds.bags.count_with_label(1)},
           {"negative_bags", ds.bags.count_with_label(0)},
           {"labelled_instances", known},
           {"positive_instances", positive},
           {"violations", dgmil::validate_dataset(ds.instances, ds.bags).size()},
           {"sha256", sha256_hex(bytes)}};
  }
  std::cout << out.dump() << '\n';
  return 0;
}

// ---- config file ---------------------------------------------------------

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::istringstream in(dgmil::read_file_bytes(path));
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      dgmil::fail(dgmil::ErrorKind::kPrecondition,
                  path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return entries;
}

std::string find_config_path(int argc, char** argv) {
  for (int k = 1; k < argc; ++k) {
    const std::string arg = argv[k];
    if (arg == "--config" && k + 1 < argc) return argv[k + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

/// Position of the subcommand token in argv, or 0 when absent.
int find_subcommand(int argc, char** argv, const std::vector<std::string>& names) {
  for (int k = 1; k < argc; ++k) {
    if (std::find(names.begin(), names.end(), argv[k]) != names.end()) return k;
  }
  return 0;
}

void add_training_flags(CLI::App* sub, Options& o) {
  sub->add_option("--clusters", o.clusters, "K-means clusters M")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--ratio", o.ratio, "extreme-instance ratio in (0, 0.5]")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.5) & CLI::Validator([](std::string& s) {
                return std::stod(s) > 0.0 ? std::string() : std::string("ratio must be > 0");
              }, "> 0"));
  sub->add_option("--max-rounds", o.max_rounds, "refinement rounds cap")->capture_default_str();
  sub->add_option("--epochs", o.epochs, "head-training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--lr", o.lr, "initial Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", o.batch_size, "head-training batch size (0 = full batch)")->capture_default_str();
  sub->add_option("--head-init", o.head_init, "projection head start: identity|random")
      ->capture_default_str()
      ->check(CLI::IsMember({"identity", "random"}));
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"dgmil: cluster-conditioned positive scoring and feature-space refinement for MIL"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(dgmil::kVersion));
  app.add_option("--config", o.config_path, "flat key=value file; keys are long flag names");
  app.add_option("--seed", o.seed, "run seed")->capture_default_str();
  app.add_option("--mode", o.mode, "reproducible|fast")->capture_default_str()->check(CLI::IsMember({"reproducible", "fast"}));
  app.add_flag("--quiet", o.quiet, "suppress informational output");

  auto* gen = app.add_subcommand("generate", "write synthetic train/test feature files and a manifest");
  gen->add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
  gen->add_option("--dim", o.synth.dim, "feature dimension d")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--phenotypes", o.synth.phenotypes, "negative phenotypes g")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--neg-bags", o.synth.neg_bags, "negative bags per split")->capture_default_str();
  gen->add_option("--pos-bags", o.synth.pos_bags, "positive bags per split")->capture_default_str();
  gen->add_option("--bag-size", o.synth.bag_size, "instances per bag")->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--witness-rate", o.synth.witness_rate, "positive fraction in positive bags, in (0, 1]")
      ->capture_default_str()
      ->check(CLI::Validator([](std::string& s) {
                const double v = std::stod(s);
                return v > 0.0 && v <= 1.0 ? std::string() : std::string("witness rate must lie in (0, 1]");
              }, "(0, 1]"));
  gen->add_option("--separation", o.synth.separation, "positive displacement from its phenotype")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  gen->add_flag("--entangle", o.synth.entangle, "mix features with a random invertible matrix");
  gen->add_option("--distractor-dims", o.synth.distractor_dims, "appended noise dimensions")->capture_default_str();
  gen->add_option("--distractor-scale", o.synth.distractor_scale, "noise dimension standard deviation")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gen->add_option("--radius", o.synth.radius, "radius of the phenotype-mean sphere")->capture_default_str()->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "refine the feature space and fit the scoring model");
  train->add_option("--train", o.train_path, "training feature file")->required();
  train->add_option("--out", o.model_path, "model bundle path")->capture_default_str();
  train->add_option("--log", o.log_path, "per-round JSON-lines log")->capture_default_str();
  add_training_flags(train, o);

  auto* eval = app.add_subcommand("eval", "score a feature file with a model bundle");
  eval->add_option("--model", o.model_path, "model bundle")->required();
  eval->add_option("--data", o.test_path, "feature file to evaluate")->required();
  eval->add_option("--report", o.report_path, "JSON-lines report path")->capture_default_str();
  eval->add_option("--curves", o.curves_path, "optional ROC/FROC curve CSV");

  auto* ablate = app.add_subcommand("ablate", "sweep the extreme ratio or the cluster count");
  ablate->add_option("--axis", o.axis, "ratio|clusters")->capture_default_str()->check(CLI::IsMember({"ratio", "clusters"}));
  auto* values_opt = ablate->add_option("--values", o.values, "comma-separated grid (default per axis)");
  ablate->add_option("--train", o.train_path, "training feature file")->required();
  ablate->add_option("--test", o.test_path, "test feature file")->required();
  ablate->add_option("--csv", o.sweep_csv, "sweep table CSV")->capture_default_str();
  ablate->add_option("--json", o.sweep_json, "sweep table JSON")->capture_default_str();
  add_training_flags(ablate, o);

  auto* inspect = app.add_subcommand("inspect", "summarize a feature file or model bundle");
  inspect->add_option("path", o.inspect_path, "file to inspect")->required();

  // Config entries become "--key=value" tokens placed before the user's own
  // flags, so explicit flags win.
  std::vector<std::string> args;
  try {
    const std::string config_path = find_config_path(argc, argv);
    const int sub_at = find_subcommand(argc, argv, {"generate", "train", "eval", "ablate", "inspect"});
    std::vector<std::string> injected;
    if (!config_path.empty()) {
      CLI::App* sub = sub_at > 0 ? app.get_subcommand(argv[sub_at]) : nullptr;
      for (const auto& [key, value] : read_config_file(config_path)) {
        const std::string flag = "--" + key;
        const bool known = key != "config" && (app.get_option_no_throw(flag) != nullptr ||
                                               (sub != nullptr && sub->get_option_no_throw(flag) != nullptr));
        if (!known) {
          dgmil::fail(dgmil::ErrorKind::kPrecondition, config_path + ": unknown key '" + key + "'");
        }
        injected.push_back(flag + "=" + value);
      }
    }
    for (int k = argc - 1; k >= 1; --k) {
      if (k == sub_at) args.insert(args.end(), injected.rbegin(), injected.rend());
      args.emplace_back(argv[k]);
    }
  } catch (const dgmil::Error& e) {
    std::cerr << "dgmil: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    app.parse(std::move(args));  // CLI11 takes the vector in reverse order
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }
  g_quiet = o.quiet;

  try {
    if (*gen) return run_generate(o);
    if (*train) return run_train(o);
    if (*eval) return run_eval(o);
    if (*ablate) {
      o.values_given = values_opt->count() > 0;
      return run_ablate(o);
    }
    if (*inspect) return run_inspect(o);
  } catch (const dgmil::Error& e) {
    std::cerr << "dgmil: " << e.what() << '\n';
    switch (e.kind()) {
      case dgmil::ErrorKind::kFormat:
      case dgmil::ErrorKind::kCorruption:
      case dgmil::ErrorKind::kValidation:
      case dgmil::ErrorKind::kPrecondition:
        return kExitValidation;
      default:
        return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::cerr << "dgmil: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
