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

// Independent reference implementations used by the tests. Each one is the
// slow, obvious version of a library routine and shares no code with it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "dgmil/dgmil.hpp"

namespace oracle {

using dgmil::Matrix;
using dgmil::Vector;

/// Explicit inverse by Gauss-Jordan elimination with partial pivoting.
inline Matrix gauss_jordan_inverse(const Matrix& a) {
  const Eigen::Index n = a.rows();
  Matrix work(n, 2 * n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      work(r, c) = a(r, c);
      work(r, n + c) = r == c ? 1.0 : 0.0;
    }
  }
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index pivot = col;
    for (Eigen::Index r = col + 1; r < n; ++r) {
      if (std::abs(work(r, col)) > std::abs(work(pivot, col))) pivot = r;
    }
    for (Eigen::Index c = 0; c < 2 * n; ++c) std::swap(work(col, c), work(pivot, c));
    const double p = work(col, col);
    for (Eigen::Index c = 0; c < 2 * n; ++c) work(col, c) /= p;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = work(r, col);
      for (Eigen::Index c = 0; c < 2 * n; ++c) work(r, c) -= f * work(col, c);
    }
  }
  Matrix inv(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) inv(r, c) = work(r, n + c);
  return inv;
}

/// (z - mu)^T S^-1 (z - mu) with an explicit inverse, plain loops.
inline double quadratic_form(const Matrix& inverse, const Vector& mean, const Vector& z) {
  const Eigen::Index d = mean.size();
  double total = 0.0;
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) total += (z[r] - mean[r]) * inverse(r, c) * (z[c] - mean[c]);
  return total;
}

inline double min_quadratic_form(const std::vector<Matrix>& inverses, const std::vector<Vector>& means,
                                 const Vector& z) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < means.size(); ++m) best = std::min(best, quadratic_form(inverses[m], means[m], z));
  return best;
}

/// AUC by enumerating every (positive, negative) pair.
inline double pair_count_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Youden J of "score > t" by direct counting.
inline double youden_by_counting(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                                 double t) {
  double tp = 0, pos = 0, tn = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0) {
      pos += 1;
      tp += scores[i] > t ? 1 : 0;
    } else {
      neg += 1;
      tn += scores[i] > t ? 0 : 1;
    }
  }
  return tp / pos + tn / neg - 1.0;
}

/// Every midpoint between consecutive distinct scores, ascending.
inline std::vector<double> candidate_midpoints(const std::vector<double>& scores) {
  std::set<double> distinct(scores.begin(), scores.end());
  std::vector<double> sorted(distinct.begin(), distinct.end());
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < sorted.size(); ++k) out.push_back(0.5 * (sorted[k] + sorted[k + 1]));
  return out;
}

struct SweepPoint {
  double threshold;
  double fp_per_bag;
  double sensitivity;
};

/// FROC by materializing the confusion counts at every distinct score,
/// instances firing at score >= threshold.
inline std::vector<SweepPoint> froc_sweep(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                                          std::size_t n_bags) {
  std::set<double> distinct(scores.begin(), scores.end());
  double total_pos = 0;
  for (auto l : labels) total_pos += l != 0 ? 1 : 0;
  std::vector<SweepPoint> out;
  for (auto it = distinct.rbegin(); it != distinct.rend(); ++it) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= *it) (labels[i] != 0 ? tp : fp) += 1;
    }
    out.push_back({*it, fp / static_cast<double>(n_bags), tp / total_pos});
  }
  return out;
}

/// Minimum inertia over every split of the rows into two nonempty groups.
struct TwoPartition {
  std::vector<int> side;
  double inertia;
};

inline TwoPartition best_two_partition(const Matrix& points) {
  const auto n = static_cast<std::size_t>(points.rows());
  TwoPartition best{{}, std::numeric_limits<double>::infinity()};
  for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << n); ++mask) {
    std::vector<int> side(n);
    for (std::size_t i = 0; i < n; ++i) side[i] = static_cast<int>((mask >> i) & 1u);
    double inertia = 0.0;
    for (int s = 0; s < 2; ++s) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(points.cols());
      double count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (side[i] == s) {
          mean += points.row(static_cast<Eigen::Index>(i));
          count += 1;
        }
      }
      mean /= count;
      for (std::size_t i = 0; i < n; ++i) {
        if (side[i] == s) inertia += (points.row(static_cast<Eigen::Index>(i)) - mean).squaredNorm();
      }
    }
    if (inertia < best.inertia) best = {side, inertia};
  }
  return best;
}

/// Random SPD matrix A A^T / d + diag shift, well conditioned.
inline Matrix random_spd(Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) a(r, c) = normal(rng);
  Matrix s = a * a.transpose() / static_cast<double>(d);
  s.diagonal().array() += 0.5;
  return 0.5 * (s + s.transpose());
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

/// Builds a dataset from per-instance bag positions; bag ids are 100 + position.
inline dgmil::Dataset make_dataset(Matrix features, std::vector<std::size_t> bag_of,
                                   std::vector<std::uint8_t> bag_labels,
                                   std::vector<dgmil::InstanceLabel> labels = {}) {
  dgmil::Dataset ds;
  if (labels.empty()) labels.assign(bag_of.size(), dgmil::InstanceLabel::kUnknown);
  std::vector<std::uint32_t> ids(bag_labels.size());
  for (std::size_t b = 0; b < ids.size(); ++b) ids[b] = static_cast<std::uint32_t>(100 + b);
  ds.bags = dgmil::make_bag_table(ids, bag_labels, bag_of);
  ds.instances.features = std::move(features);
  ds.instances.bag_of = std::move(bag_of);
  ds.instances.labels = std::move(labels);
  return ds;
}

/// A small synthetic config used across tests: quick to generate and train.
inline dgmil::SyntheticConfig small_config(std::uint64_t seed = 7) {
  dgmil::SyntheticConfig c;
  c.dim = 6;
  c.phenotypes = 3;
  c.neg_bags = 8;
  c.pos_bags = 8;
  c.bag_size = 40;
  c.witness_rate = 0.1;
  c.separation = 8.0;
  c.seed = seed;
  return c;
}

}  // namespace oracle
