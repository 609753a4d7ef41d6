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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dgmil/common.hpp"
#include "dgmil/dataset.hpp"
#include "dgmil/distribution.hpp"
#include "dgmil/feature_io.hpp"
#include "dgmil/heads.hpp"
#include "dgmil/metrics.hpp"
#include "dgmil/refinement.hpp"

namespace dgmil {

/// Everything needed to score new data: the per-round projections, the
/// cluster model of the final space, score anchors and the bag threshold.
struct ModelBundle {
  RefinementConfig config;
  std::size_t dim = 0;
  std::vector<HeadParams> heads;
  ClusterModel cluster_model;
  ScoreAnchors anchors;
  double threshold = 0.0;  // on raw bag scores, chosen on the training bags
  bool converged = false;
  std::optional<double> initial_train_instance_auc;
  std::optional<double> initial_train_bag_auc;
  std::optional<double> train_instance_auc;
  std::optional<double> train_bag_auc;
};

inline ModelBundle make_bundle(const RefinementState& state, const BagTable& train_bags) {
  ModelBundle bundle;
  bundle.config = state.config;
  bundle.dim = static_cast<std::size_t>(state.features.cols());
  bundle.heads = round_heads(state);
  const SpaceFit& fit = state.final_fit();
  bundle.cluster_model = fit.model;
  bundle.anchors = fit.scores.anchors;
  const auto labels = train_bags.labels();
  if (has_both_classes(labels)) bundle.threshold = choose_threshold(fit.scores.bag_scores, labels);
  bundle.converged = state.converged;
  bundle.initial_train_instance_auc = state.initial.instance_auc;
  bundle.initial_train_bag_auc = state.initial.bag_auc;
  bundle.train_instance_auc = fit.instance_auc;
  bundle.train_bag_auc = fit.bag_auc;
  return bundle;
}

struct MetricsReport {
  std::optional<double> instance_auc;
  std::optional<double> bag_auc;
  std::optional<double> bag_accuracy;
  double threshold = 0.0;
  double threshold_normalized = 0.0;
  std::vector<FrocPoint> froc_points;
  std::optional<double> froc_score;
  std::size_t n_bags = 0;
  std::size_t n_instances = 0;
  std::optional<std::size_t> n_positive_instances;
  std::vector<double> instance_scores;
  std::vector<double> bag_scores;
  std::vector<std::string> notes;  // why a metric is absent
};

/// Maps a dataset into the bundle's final space, scores it, mean-pools bag
/// scores and computes every metric the available labels allow.
inline MetricsReport evaluate(const ModelBundle& bundle, const InstanceSet& instances, const BagTable& bags) {
  if (instances.dim() != bundle.dim) {
    fail(ErrorKind::kPrecondition, "dataset has dimension " + std::to_string(instances.dim()) +
                                       ", model expects " + std::to_string(bundle.dim));
  }
  MetricsReport report;
  const Matrix features = apply_projections(instances.features, bundle.heads, bundle.config.mode);
  report.instance_scores = score_rows(bundle.cluster_model, features, bundle.config.mode);
  report.bag_scores = pool_bag_scores(report.instance_scores, bags);
  report.n_bags = bags.size();
  report.n_instances = instances.size();
  report.threshold = bundle.threshold;
  report.threshold_normalized =
      bundle.anchors.hi > bundle.anchors.lo ? normalize_score(bundle.threshold, bundle.anchors) : 0.0;

  const auto bag_labels = bags.labels();
  if (has_both_classes(bag_labels)) {
    report.bag_auc = roc_auc(report.bag_scores, bag_labels);
  } else {
    report.notes.emplace_back("bag AUC absent: bags of only one class");
  }
  report.bag_accuracy = accuracy_at(report.bag_scores, bag_labels, bundle.threshold);

  if (instances.has_all_labels()) {
    const auto labels = known_instance_labels(instances);
    report.n_positive_instances =
        static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
    if (has_both_classes(labels)) {
      report.instance_auc = roc_auc(report.instance_scores, labels);
    } else {
      report.notes.emplace_back("instance AUC absent: instances of only one class");
    }
    if (*report.n_positive_instances > 0) {
      FrocResult f = froc(report.instance_scores, labels, bags.size());
      report.froc_points = std::move(f.points);
      report.froc_score = f.score;
    } else {
      report.notes.emplace_back("FROC absent: no positive instances");
    }
  } else {
    report.notes.emplace_back("instance metrics absent: instance labels unknown");
  }
  return report;
}

// ---- JSON --------------------------------------------------------------

namespace detail {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) fail(ErrorKind::kFormat, "ragged matrix in model bundle");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

template <typename T>
json optional_to_json(const std::optional<T>& value) {
  return value ? json(*value) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

}  // namespace detail

inline nlohmann::json config_to_json(const RefinementConfig& c) {
  return {{"clusters", c.clusters},
          {"ratio", c.ratio},
          {"max-rounds", c.max_rounds},
          {"epochs", c.training.max_epochs},
          {"lr", c.training.learning_rate},
          {"batch-size", c.training.batch_size},
          {"head-init", c.training.identity_init ? "identity" : "random"},
          {"seed", c.seed},
          {"mode", to_string(c.mode)}};
}

inline RefinementConfig config_from_json(const nlohmann::json& j) {
  RefinementConfig c;
  c.clusters = j.at("clusters").get<std::size_t>();
  c.ratio = j.at("ratio").get<double>();
  c.max_rounds = j.at("max-rounds").get<std::size_t>();
  c.training.max_epochs = j.at("epochs").get<std::size_t>();
  c.training.learning_rate = j.at("lr").get<double>();
  c.training.batch_size = j.at("batch-size").get<std::size_t>();
  const auto init = j.at("head-init").get<std::string>();
  if (init != "identity" && init != "random") fail(ErrorKind::kFormat, "unknown head-init '" + init + "'");
  c.training.identity_init = init == "identity";
  c.seed = j.at("seed").get<std::uint64_t>();
  c.mode = parse_exec_mode(j.at("mode").get<std::string>());
  return c;
}

inline nlohmann::json bundle_to_json(const ModelBundle& b) {
  using detail::json;
  json heads = json::array();
  for (const HeadParams& h : b.heads) {
    heads.push_back({{"projection", detail::matrix_to_json(h.projection)},
                     {"projection_bias", detail::vector_to_json(h.projection_bias)},
                     {"classifier", detail::vector_to_json(h.classifier)},
                     {"classifier_bias", h.classifier_bias}});
  }
  const HeadParams collapsed = collapse_projections(b.heads, b.dim);
  json clusters = json::array();
  for (std::size_t m = 0; m < b.cluster_model.clusters(); ++m) {
    clusters.push_back({{"mean", detail::vector_to_json(b.cluster_model.means[m])},
                        {"covariance", detail::matrix_to_json(b.cluster_model.covariances[m])},
                        {"members", b.cluster_model.member_counts[m]},
                        {"epsilon", b.cluster_model.epsilons[m]}});
  }
  return {{"format", "dgmil-model"},
          {"version", kVersion},
          {"config", config_to_json(b.config)},
          {"dim", b.dim},
          {"heads", std::move(heads)},
          {"collapsed_projection",
           {{"projection", detail::matrix_to_json(collapsed.projection)},
            {"projection_bias", detail::vector_to_json(collapsed.projection_bias)}}},
          {"clusters", std::move(clusters)},
          {"anchors", {{"lo", b.anchors.lo}, {"hi", b.anchors.hi}}},
          {"threshold", b.threshold},
          {"converged", b.converged},
          {"train",
           {{"initial_instance_auc", detail::optional_to_json(b.initial_train_instance_auc)},
            {"initial_bag_auc", detail::optional_to_json(b.initial_train_bag_auc)},
            {"instance_auc", detail::optional_to_json(b.train_instance_auc)},
            {"bag_auc", detail::optional_to_json(b.train_bag_auc)}}}};
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dgmil-model") fail(ErrorKind::kFormat, "not a dgmil model bundle");
    ModelBundle b;
    b.config = config_from_json(j.at("config"));
    b.dim = j.at("dim").get<std::size_t>();
    for (const auto& h : j.at("heads")) {
      HeadParams p;
      p.projection = detail::matrix_from_json(h.at("projection"));
      p.projection_bias = detail::vector_from_json(h.at("projection_bias"));
      p.classifier = detail::vector_from_json(h.at("classifier"));
      p.classifier_bias = h.at("classifier_bias").get<double>();
      if (p.dim() != b.dim) fail(ErrorKind::kFormat, "projection head dimension disagrees with bundle");
      b.heads.push_back(std::move(p));
    }
    std::vector<Vector> means;
    std::vector<Matrix> covariances;
    std::vector<std::size_t> counts;
    std::vector<double> epsilons;
    for (const auto& c : j.at("clusters")) {
      means.push_back(detail::vector_from_json(c.at("mean")));
      covariances.push_back(detail::matrix_from_json(c.at("covariance")));
      counts.push_back(c.at("members").get<std::size_t>());
      epsilons.push_back(c.at("epsilon").get<double>());
    }
    b.cluster_model = make_cluster_model(std::move(means), std::move(covariances), std::move(counts), std::move(epsilons));
    if (b.cluster_model.dim() != b.dim) fail(ErrorKind::kFormat, "cluster model dimension disagrees with bundle");
    b.anchors = {j.at("anchors").at("lo").get<double>(), j.at("anchors").at("hi").get<double>()};
    b.threshold = j.at("threshold").get<double>();
    b.converged = j.at("converged").get<bool>();
    const auto& t = j.at("train");
    b.initial_train_instance_auc = detail::optional_from_json<double>(t.at("initial_instance_auc"));
    b.initial_train_bag_auc = detail::optional_from_json<double>(t.at("initial_bag_auc"));
    b.train_instance_auc = detail::optional_from_json<double>(t.at("instance_auc"));
    b.train_bag_auc = detail::optional_from_json<double>(t.at("bag_auc"));
    return b;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed model bundle: ") + e.what());
  }
}

inline void write_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  write_file_atomic(path, bundle_to_json(bundle).dump() + "\n");
}

inline ModelBundle read_bundle(const std::filesystem::path& path) {
  const std::string text = read_file_bytes(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  return bundle_from_json(j);
}

/// The report as one JSON object (no curves or per-instance scores).
inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json notes = nlohmann::json::array();
  for (const auto& n : r.notes) notes.push_back(n);
  return {{"instance_auc", detail::optional_to_json(r.instance_auc)},
          {"bag_auc", detail::optional_to_json(r.bag_auc)},
          {"bag_accuracy", detail::optional_to_json(r.bag_accuracy)},
          {"threshold", r.threshold},
          {"threshold_normalized", r.threshold_normalized},
          {"froc_score", detail::optional_to_json(r.froc_score)},
          {"froc_points_count", r.froc_points.size()},
          {"n_bags", r.n_bags},
          {"n_instances", r.n_instances},
          {"n_positive_instances", detail::optional_to_json(r.n_positive_instances)},
          {"notes", std::move(notes)}};
}

}  // namespace dgmil
