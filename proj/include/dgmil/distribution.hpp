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

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dgmil/common.hpp"
#include "dgmil/dataset.hpp"

namespace dgmil {

/// Per-cluster Gaussian statistics of negative-bag instances.
struct ClusterModel {
  std::vector<Vector> means;
  std::vector<Matrix> covariances;  // regularized, SPD
  std::vector<Matrix> factors;      // lower Cholesky factor L, L L^T = covariance
  std::vector<std::size_t> member_counts;
  std::vector<double> epsilons;     // ridge added to each covariance

  std::size_t clusters() const { return means.size(); }
  std::size_t dim() const { return means.empty() ? 0 : static_cast<std::size_t>(means.front().size()); }
};

/// Ridge for a cluster covariance: scale-aware with an absolute floor.
inline double covariance_ridge(const Matrix& covariance) {
  const double d = static_cast<double>(covariance.rows());
  return std::max(1e-6 * covariance.trace() / d, 1e-12);
}

inline Matrix cholesky_lower(const Matrix& spd, std::size_t cluster) {
  Eigen::LLT<Matrix> llt(spd);
  if (llt.info() != Eigen::Success) {
    fail(ErrorKind::kRuntime, "covariance of cluster " + std::to_string(cluster) + " is not positive definite");
  }
  return llt.matrixL();
}

/// Assembles a model from stored means and (already regularized) covariances,
/// recomputing the factorizations.
inline ClusterModel make_cluster_model(std::vector<Vector> means, std::vector<Matrix> covariances,
                                       std::vector<std::size_t> counts, std::vector<double> epsilons) {
  require(means.size() == covariances.size() && means.size() == counts.size() && means.size() == epsilons.size(),
          "cluster model parts differ in length");
  ClusterModel model;
  model.factors.reserve(means.size());
  for (std::size_t m = 0; m < means.size(); ++m) model.factors.push_back(cholesky_lower(covariances[m], m));
  model.means = std::move(means);
  model.covariances = std::move(covariances);
  model.member_counts = std::move(counts);
  model.epsilons = std::move(epsilons);
  return model;
}

/// Mean and population covariance (divisor = member count) per cluster, plus ridge.
inline ClusterModel fit_cluster_model(const Matrix& points, std::span<const std::size_t> assignment,
                                      std::size_t clusters) {
  require(static_cast<std::size_t>(points.rows()) == assignment.size(), "assignment length differs from point count");
  require(clusters >= 1, "cluster model needs at least one cluster");
  if (!points.allFinite()) fail(ErrorKind::kPrecondition, "cluster model input contains non-finite values");

  std::vector<std::vector<Eigen::Index>> members(clusters);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    require(assignment[i] < clusters, "assignment refers to cluster " + std::to_string(assignment[i]));
    members[assignment[i]].push_back(static_cast<Eigen::Index>(i));
  }
  const Eigen::Index d = points.cols();
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  std::vector<std::size_t> counts;
  std::vector<double> epsilons;
  for (std::size_t m = 0; m < clusters; ++m) {
    require(!members[m].empty(), "cluster " + std::to_string(m) + " has no members");
    const auto count = static_cast<Eigen::Index>(members[m].size());
    Matrix block(count, d);
    for (Eigen::Index k = 0; k < count; ++k) block.row(k) = points.row(members[m][static_cast<std::size_t>(k)]);
    Vector mean = block.colwise().mean().transpose();
    block.rowwise() -= mean.transpose();
    Matrix cov = (block.transpose() * block) / static_cast<double>(count);
    cov = 0.5 * (cov + cov.transpose());
    const double eps = covariance_ridge(cov);
    cov.diagonal().array() += eps;
    means.push_back(std::move(mean));
    covariances.push_back(std::move(cov));
    counts.push_back(static_cast<std::size_t>(count));
    epsilons.push_back(eps);
  }
  return make_cluster_model(std::move(means), std::move(covariances), std::move(counts), std::move(epsilons));
}

/// Squared Mahalanobis distance to one cluster via a forward solve L y = z - mu.
inline double cluster_distance(const ClusterModel& model, std::size_t cluster, const double* z) {
  const Matrix& L = model.factors[cluster];
  const Vector& mu = model.means[cluster];
  const Eigen::Index d = L.rows();
  thread_local std::vector<double> y;
  y.resize(static_cast<std::size_t>(d));
  double total = 0.0;
  for (Eigen::Index r = 0; r < d; ++r) {
    double acc = z[r] - mu[r];
    for (Eigen::Index c = 0; c < r; ++c) acc -= L(r, c) * y[static_cast<std::size_t>(c)];
    const double v = acc / L(r, r);
    y[static_cast<std::size_t>(r)] = v;
    total += v * v;
  }
  return total;
}

/// Positive score: minimum over clusters of the squared Mahalanobis distance.
inline double positive_score(const ClusterModel& model, std::span<const double> z) {
  if (z.size() != model.dim()) {
    fail(ErrorKind::kPrecondition, "query has dimension " + std::to_string(z.size()) + ", model expects " +
                                       std::to_string(model.dim()));
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < model.clusters(); ++m) best = std::min(best, cluster_distance(model, m, z.data()));
  return best;
}

inline double positive_score(const ClusterModel& model, const Vector& z) {
  return positive_score(model, std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
}

/// Scores every row of a feature matrix.
inline std::vector<double> score_rows(const ClusterModel& model, const Matrix& features,
                                      ExecMode mode = ExecMode::kReproducible) {
  if (static_cast<std::size_t>(features.cols()) != model.dim()) {
    fail(ErrorKind::kPrecondition, "features have dimension " + std::to_string(features.cols()) +
                                       ", model expects " + std::to_string(model.dim()));
  }
  const auto n = static_cast<std::size_t>(features.rows());
  std::vector<double> scores(n);
  parallel_for(n, mode, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* row = features.data() + static_cast<Eigen::Index>(i) * features.cols();
      scores[i] = positive_score(model, std::span<const double>(row, model.dim()));
    }
  });
  return scores;
}

struct ScoreAnchors {
  double lo = 0.0;  // 1st percentile of reference scores
  double hi = 1.0;  // 99th percentile
};

struct ScoreSet {
  std::vector<double> instance_scores;
  std::vector<double> bag_scores;  // mean-pooled, in BagTable order
  ScoreAnchors anchors;
};

/// Mean pooling over bag members (summed in sorted order, so bag scores do not
/// depend on instance order).
inline std::vector<double> pool_bag_scores(std::span<const double> instance_scores, const BagTable& bags) {
  std::vector<double> out;
  out.reserve(bags.size());
  for (const Bag& bag : bags.bags) {
    if (bag.members.empty()) fail(ErrorKind::kPrecondition, "bag " + std::to_string(bag.id) + " is empty");
    std::vector<double> values;
    values.reserve(bag.members.size());
    for (std::size_t i : bag.members) values.push_back(instance_scores[i]);
    out.push_back(order_independent_mean(std::move(values)));
  }
  return out;
}

inline ScoreAnchors score_anchors(std::span<const double> scores) {
  return {percentile(scores, 1.0), percentile(scores, 99.0)};
}

inline ScoreSet score_dataset(const ClusterModel& model, const Matrix& features, const BagTable& bags,
                              ExecMode mode = ExecMode::kReproducible) {
  ScoreSet out;
  out.instance_scores = score_rows(model, features, mode);
  out.bag_scores = pool_bag_scores(out.instance_scores, bags);
  out.anchors = score_anchors(out.instance_scores);
  return out;
}

inline ScoreSet score_dataset(const ClusterModel& model, const InstanceSet& instances, const BagTable& bags,
                              ExecMode mode = ExecMode::kReproducible) {
  return score_dataset(model, instances.features, bags, mode);
}

inline double normalize_score(double score, const ScoreAnchors& anchors) {
  if (!(anchors.hi > anchors.lo)) fail(ErrorKind::kPrecondition, "degenerate score anchors (hi <= lo)");
  return std::clamp((score - anchors.lo) / (anchors.hi - anchors.lo), 0.0, 1.0);
}

/// Maps scores onto [0, 1] by the anchors, clamping outside them.
inline std::vector<double> normalize_scores(std::span<const double> scores, const ScoreAnchors& anchors) {
  if (!(anchors.hi > anchors.lo)) fail(ErrorKind::kPrecondition, "degenerate score anchors (hi <= lo)");
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(normalize_score(s, anchors));
  return out;
}

}  // namespace dgmil
