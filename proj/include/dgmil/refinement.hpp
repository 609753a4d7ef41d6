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

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgmil/common.hpp"
#include "dgmil/dataset.hpp"
#include "dgmil/distribution.hpp"
#include "dgmil/heads.hpp"
#include "dgmil/kmeans.hpp"
#include "dgmil/metrics.hpp"

namespace dgmil {

/// Pseudo-labelled extreme instances, both index lists ascending.
struct ExtremeSelection {
  std::vector<std::size_t> positives;  // highest scores among positive-bag instances
  std::vector<std::size_t> negatives;  // lowest scores among negative-bag instances
  double ratio = 0.0;

  bool operator==(const ExtremeSelection& other) const {
    return positives == other.positives && negatives == other.negatives;
  }
};

/// Takes the top ratio of positive-bag instances by score and the bottom
/// ratio of negative-bag instances, pooled over all bags of each label.
/// Equal scores are broken by ascending instance index.
inline ExtremeSelection select_extremes(std::span<const double> scores, const std::vector<std::size_t>& bag_of,
                                        const BagTable& bags, double ratio) {
  require(ratio > 0.0 && ratio <= 0.5, "extreme ratio must lie in (0, 0.5]");
  require(scores.size() == bag_of.size(), "scores and bag membership differ in length");
  std::vector<std::size_t> pos_pool;
  std::vector<std::size_t> neg_pool;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (bags.bags.at(bag_of[i]).label != 0 ? pos_pool : neg_pool).push_back(i);
  }
  if (pos_pool.empty()) fail(ErrorKind::kPrecondition, "extreme selection needs at least one positive bag");
  if (neg_pool.empty()) fail(ErrorKind::kPrecondition, "extreme selection needs at least one negative bag");

  auto take = [&](std::vector<std::size_t>& pool, bool highest) {
    const std::size_t count =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pool.size()))));
    std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
      return highest ? scores[a] > scores[b] : scores[a] < scores[b];
    });
    std::vector<std::size_t> picked(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(picked.begin(), picked.end());
    return picked;
  };
  ExtremeSelection out;
  out.ratio = ratio;
  out.positives = take(pos_pool, true);
  out.negatives = take(neg_pool, false);
  return out;
}

struct RefinementConfig {
  std::size_t clusters = 10;
  double ratio = 0.10;
  std::size_t max_rounds = 20;
  TrainingConfig training;
  std::uint64_t seed = 0;
  ExecMode mode = ExecMode::kReproducible;
};

/// Scores of one fitted feature space together with its audit metrics.
struct SpaceFit {
  ClusterModel model;
  ScoreSet scores;
  double inertia = 0.0;
  std::uint64_t kmeans_seed = 0;
  std::optional<double> instance_auc;  // present when every instance label is known
  std::optional<double> bag_auc;
};

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  ExtremeSelection selection;
  HeadParams heads;
  std::vector<double> loss_curve;
  std::uint64_t head_seed = 0;
  SpaceFit fit;  // the space after this round's projection
};

struct RefinementState {
  RefinementConfig config;
  Matrix features;               // current (final) space
  SpaceFit initial;              // round 0, the unrefined space
  std::vector<RoundRecord> rounds;
  bool converged = false;        // stopped on a repeated selection rather than max_rounds

  std::size_t rounds_run() const { return rounds.size(); }
  const SpaceFit& final_fit() const { return rounds.empty() ? initial : rounds.back().fit; }
};

inline std::vector<std::uint8_t> known_instance_labels(const InstanceSet& instances) {
  std::vector<std::uint8_t> out;
  out.reserve(instances.size());
  for (auto l : instances.labels) out.push_back(l == InstanceLabel::kPositive ? 1 : 0);
  return out;
}

inline bool has_both_classes(std::span<const std::uint8_t> labels) {
  const bool pos = std::any_of(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; });
  const bool neg = std::any_of(labels.begin(), labels.end(), [](std::uint8_t l) { return l == 0; });
  return pos && neg;
}

/// K-means on the negative-bag rows of the space, per-cluster Gaussians, and
/// scores for every instance.
inline SpaceFit fit_space(const Matrix& features, const InstanceSet& instances, const BagTable& bags,
                          const RefinementConfig& config, std::uint64_t kmeans_seed) {
  std::vector<Eigen::Index> negative_rows;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (bags.bags[instances.bag_of[i]].label == 0) negative_rows.push_back(static_cast<Eigen::Index>(i));
  }
  require(!negative_rows.empty(), "distribution modelling needs negative-bag instances");
  Matrix negatives(static_cast<Eigen::Index>(negative_rows.size()), features.cols());
  for (std::size_t k = 0; k < negative_rows.size(); ++k) negatives.row(static_cast<Eigen::Index>(k)) = features.row(negative_rows[k]);

  KMeansOptions options;
  options.mode = config.mode;
  const KMeansResult clusters = kmeans(negatives, config.clusters, kmeans_seed, options);

  SpaceFit fit;
  fit.kmeans_seed = kmeans_seed;
  fit.inertia = clusters.inertia;
  fit.model = fit_cluster_model(negatives, clusters.assignment, config.clusters);
  fit.scores = score_dataset(fit.model, features, bags, config.mode);
  if (instances.has_all_labels()) {
    const auto labels = known_instance_labels(instances);
    if (has_both_classes(labels)) fit.instance_auc = roc_auc(fit.scores.instance_scores, labels);
  }
  const auto bag_labels = bags.labels();
  if (has_both_classes(bag_labels)) fit.bag_auc = roc_auc(fit.scores.bag_scores, bag_labels);
  return fit;
}

inline std::uint64_t kmeans_seed_for_round(std::uint64_t seed, std::size_t round) {
  return derive_seed(seed, {0x6b6du, static_cast<std::uint32_t>(round)});
}

inline std::uint64_t head_seed_for_round(std::uint64_t seed, std::size_t round) {
  return derive_seed(seed, {0x6864u, static_cast<std::uint32_t>(round)});
}

/// Iterative feature-space refinement. Each round selects extreme instances
/// from the current scores, trains the heads on them, remaps every instance
/// through the projection head and refits the cluster model (fresh k-means++
/// seeding each time). Stops when a round selects exactly the instances the
/// previous round did, or after max_rounds.
inline RefinementState refine(const InstanceSet& instances, const BagTable& bags, const RefinementConfig& config) {
  require(bags.count_with_label(1) >= 1 && bags.count_with_label(0) >= 1,
          "refinement needs at least one positive and one negative bag");
  require(config.clusters >= 1, "cluster count must be >= 1");
  require(config.ratio > 0.0 && config.ratio <= 0.5, "extreme ratio must lie in (0, 0.5]");

  RefinementState state;
  state.config = config;
  state.features = instances.features;
  state.initial = fit_space(state.features, instances, bags, config, kmeans_seed_for_round(config.seed, 0));

  for (std::size_t round = 1; round <= config.max_rounds; ++round) {
    try {
      RoundRecord record;
      record.round = round;
      record.selection = select_extremes(state.final_fit().scores.instance_scores, instances.bag_of, bags, config.ratio);
      if (!state.rounds.empty() && record.selection == state.rounds.back().selection) {
        state.converged = true;
        break;
      }

      const std::size_t n_pos = record.selection.positives.size();
      const std::size_t n_sel = n_pos + record.selection.negatives.size();
      Matrix x(static_cast<Eigen::Index>(n_sel), state.features.cols());
      std::vector<double> targets(n_sel);
      for (std::size_t k = 0; k < n_sel; ++k) {
        const std::size_t idx = k < n_pos ? record.selection.positives[k] : record.selection.negatives[k - n_pos];
        x.row(static_cast<Eigen::Index>(k)) = state.features.row(static_cast<Eigen::Index>(idx));
        targets[k] = k < n_pos ? 1.0 : 0.0;
      }
      record.head_seed = head_seed_for_round(config.seed, round);
      TrainingResult trained = train_heads(x, targets, config.training, record.head_seed);
      record.heads = std::move(trained.params);
      record.loss_curve = std::move(trained.loss_curve);

      state.features = remap_features(state.features, record.heads, config.mode);
      record.fit = fit_space(state.features, instances, bags, config, kmeans_seed_for_round(config.seed, round));
      state.rounds.push_back(std::move(record));
    } catch (const Error& e) {
      throw Error(e.kind(), "refinement round " + std::to_string(round) + ": " + e.detail());
    }
  }
  return state;
}

/// Maps features through the per-round projections in round order.
inline Matrix apply_projections(const Matrix& features, std::span<const HeadParams> heads,
                                ExecMode mode = ExecMode::kReproducible) {
  Matrix out = features;
  for (const HeadParams& h : heads) out = remap_features(out, h, mode);
  return out;
}

inline std::vector<HeadParams> round_heads(const RefinementState& state) {
  std::vector<HeadParams> heads;
  heads.reserve(state.rounds.size());
  for (const auto& r : state.rounds) heads.push_back(r.heads);
  return heads;
}

inline Matrix apply_to_test(const RefinementState& state, const Matrix& test_features) {
  if (test_features.cols() != state.features.cols()) {
    fail(ErrorKind::kPrecondition, "test features have dimension " + std::to_string(test_features.cols()) +
                                       ", refined space has " + std::to_string(state.features.cols()));
  }
  const auto heads = round_heads(state);
  return apply_projections(test_features, heads, state.config.mode);
}

/// All per-round projections collapsed into one affine map.
inline HeadParams collapse_projections(std::span<const HeadParams> heads, std::size_t d) {
  HeadParams total = HeadParams::identity(d);
  for (const HeadParams& h : heads) total = compose(h, total);
  return total;
}

}  // namespace dgmil
