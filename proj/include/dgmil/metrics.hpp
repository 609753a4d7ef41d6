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
#include <array>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dgmil/common.hpp"

namespace dgmil {

/// Mann-Whitney AUC via midranks: (concordant + 0.5 tied) / (pos * neg).
inline double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positives = 0.0;
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j+1 share the midrank; keep it doubled to stay integral.
    const double doubled_midrank = static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) {
        positives += 1.0;
        rank_sum += doubled_midrank;
      }
    }
    i = j + 1;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) fail(ErrorKind::kPrecondition, "AUC needs both classes");
  const double u = 0.5 * rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

/// Youden's J of the rule "score > threshold => positive".
inline double youden_j(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    if (labels[i] != 0) {
      (predicted ? tp : fn) += 1.0;
    } else {
      (predicted ? fp : tn) += 1.0;
    }
  }
  return tp / (tp + fn) + tn / (tn + fp) - 1.0;
}

inline double accuracy_at(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold) {
  require(!scores.empty() && scores.size() == labels.size(), "accuracy needs matching non-empty inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) correct += (scores[i] > threshold) == (labels[i] != 0);
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

/// Threshold maximizing Youden's J over midpoints of consecutive distinct
/// scores; the lowest threshold wins ties. With a single distinct score the
/// threshold is that score.
inline double choose_threshold(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), "scores and labels differ in length");
  const auto pos = std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; });
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    fail(ErrorKind::kPrecondition, "threshold selection needs both classes");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  const double total_pos = static_cast<double>(pos);
  const double total_neg = static_cast<double>(scores.size()) - total_pos;
  // Sweep upward: after passing a score group, those instances fall below the threshold.
  double below_pos = 0, below_neg = 0;
  double best_threshold = scores[order.front()];
  double best_j = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? below_pos : below_neg) += 1.0;
      ++j;
    }
    if (j == order.size()) break;
    const double candidate = 0.5 * (scores[order[i]] + scores[order[j]]);
    const double jstat = (total_pos - below_pos) / total_pos + below_neg / total_neg - 1.0;
    if (jstat > best_j) {
      best_j = jstat;
      best_threshold = candidate;
    }
    i = j;
  }
  return best_threshold;
}

struct FrocPoint {
  double fp_per_bag = 0.0;
  double sensitivity = 0.0;
};

inline constexpr std::array<double, 6> kFrocOperatingPoints{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

struct FrocResult {
  std::vector<FrocPoint> points;  // one per distinct score, threshold descending
  double score = 0.0;             // mean interpolated sensitivity at the operating points
};

/// Sensitivity at a false-positive rate, linearly interpolated along the
/// curve and clamped to its endpoints.
inline double froc_sensitivity_at(std::span<const FrocPoint> curve, double fp_per_bag) {
  require(!curve.empty(), "empty FROC curve");
  if (fp_per_bag < curve.front().fp_per_bag) return curve.front().sensitivity;
  // Last point at or below the target; its sensitivity is the highest at that rate.
  std::size_t lo = 0;
  while (lo + 1 < curve.size() && curve[lo + 1].fp_per_bag <= fp_per_bag) ++lo;
  if (lo + 1 == curve.size()) return curve.back().sensitivity;
  const FrocPoint& a = curve[lo];
  const FrocPoint& b = curve[lo + 1];
  const double t = (fp_per_bag - a.fp_per_bag) / (b.fp_per_bag - a.fp_per_bag);
  return a.sensitivity + t * (b.sensitivity - a.sensitivity);
}

/// Instance-level FROC. An instance fires when its score is >= the threshold;
/// the threshold sweeps every distinct score from high to low.
inline FrocResult froc(std::span<const double> scores, std::span<const std::uint8_t> instance_labels,
                       std::size_t n_bags) {
  require(scores.size() == instance_labels.size(), "scores and labels differ in length");
  require(n_bags >= 1, "FROC needs at least one bag");
  const auto total_pos = std::count_if(instance_labels.begin(), instance_labels.end(),
                                       [](std::uint8_t l) { return l != 0; });
  if (total_pos == 0) fail(ErrorKind::kPrecondition, "FROC needs at least one positive instance");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  FrocResult result;
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (instance_labels[order[j]] != 0 ? tp : fp) += 1.0;
      ++j;
    }
    result.points.push_back({fp / static_cast<double>(n_bags), tp / static_cast<double>(total_pos)});
    i = j;
  }
  double sum = 0.0;
  for (double op : kFrocOperatingPoints) sum += froc_sensitivity_at(result.points, op);
  result.score = sum / static_cast<double>(kFrocOperatingPoints.size());
  return result;
}

/// ROC curve points (fpr, tpr) for every distinct threshold, high to low,
/// starting at (0, 0).
inline std::vector<std::pair<double, double>> roc_curve(std::span<const double> scores,
                                                        std::span<const std::uint8_t> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; }));
  const double neg = static_cast<double>(labels.size()) - pos;
  std::vector<std::pair<double, double>> out{{0.0, 0.0}};
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? tp : fp) += 1.0;
      ++j;
    }
    out.emplace_back(neg > 0 ? fp / neg : 0.0, pos > 0 ? tp / pos : 0.0);
    i = j;
  }
  return out;
}

}  // namespace dgmil
