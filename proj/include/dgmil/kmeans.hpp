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
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dgmil/common.hpp"

namespace dgmil {

struct KMeansOptions {
  std::size_t max_iterations = 100;
  /// Convergence when the largest centroid move is below this fraction of the
  /// data diameter (bounding-box diagonal).
  double relative_tolerance = 1e-4;
  ExecMode mode = ExecMode::kReproducible;
};

struct KMeansResult {
  Matrix centroids;                     // M x d
  std::vector<std::size_t> assignment;  // per input row
  double inertia = 0.0;
  std::size_t iterations_run = 0;
  std::vector<double> inertia_history;  // one entry per assignment step
  std::size_t clusters() const { return static_cast<std::size_t>(centroids.rows()); }
};

namespace detail {

inline double squared_distance(const Matrix& a, Eigen::Index ra, const Matrix& b, Eigen::Index rb) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const double diff = a(ra, j) - b(rb, j);
    s += diff * diff;
  }
  return s;
}

inline std::size_t count_distinct_rows(const Matrix& points, std::size_t stop_at) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto row_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      if (points(a, j) != points(b, j)) return points(a, j) < points(b, j);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::size_t distinct = order.empty() ? 0 : 1;
  for (std::size_t k = 1; k < order.size() && distinct < stop_at; ++k) {
    if (row_less(order[k - 1], order[k])) ++distinct;
  }
  return distinct;
}

inline double bounding_box_diagonal(const Matrix& points) {
  const Eigen::RowVectorXd span = points.colwise().maxCoeff() - points.colwise().minCoeff();
  return span.norm();
}

/// Nearest centroid per point; ties go to the lowest cluster index.
inline double assign_points(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& assignment,
                            std::vector<double>& distance, ExecMode mode) {
  const auto n = static_cast<std::size_t>(points.rows());
  assignment.resize(n);
  distance.resize(n);
  parallel_for(n, mode, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_m = 0;
      for (Eigen::Index m = 0; m < centroids.rows(); ++m) {
        const double dist = squared_distance(points, static_cast<Eigen::Index>(i), centroids, m);
        if (dist < best) {
          best = dist;
          best_m = static_cast<std::size_t>(m);
        }
      }
      assignment[i] = best_m;
      distance[i] = best;
    }
  });
  double inertia = 0.0;
  for (double v : distance) inertia += v;
  return inertia;
}

}  // namespace detail

/// k-means++ seeding: first centre uniform, then D^2-weighted draws.
inline Matrix kmeans_plus_plus(const Matrix& points, std::size_t clusters, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  Matrix centroids(static_cast<Eigen::Index>(clusters), points.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centroids.row(0) = points.row(static_cast<Eigen::Index>(pick(rng)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = detail::squared_distance(points, static_cast<Eigen::Index>(i), centroids, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t m = 1; m < clusters; ++m) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    const double target = unit(rng) * total;
    double cumulative = 0.0;
    std::size_t chosen = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      cumulative += d2[i];
      chosen = i;
      if (cumulative > target) break;
    }
    centroids.row(static_cast<Eigen::Index>(m)) = points.row(static_cast<Eigen::Index>(chosen));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], detail::squared_distance(points, static_cast<Eigen::Index>(i), centroids,
                                                       static_cast<Eigen::Index>(m)));
    }
  }
  return centroids;
}

/// Lloyd iterations from the given starting centroids.
inline KMeansResult kmeans_from(const Matrix& points, Matrix initial_centroids, const KMeansOptions& options = {}) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto clusters = static_cast<std::size_t>(initial_centroids.rows());
  require(clusters >= 1, "k-means needs at least one cluster");
  require(initial_centroids.cols() == points.cols(), "initial centroids have the wrong dimension");
  if (n < clusters) {
    fail(ErrorKind::kPrecondition, "k-means got " + std::to_string(n) + " points for " + std::to_string(clusters) +
                                       " clusters; lower the cluster count");
  }
  require(points.allFinite(), "k-means input contains non-finite values");

  KMeansResult result;
  result.centroids = std::move(initial_centroids);
  const double tolerance = options.relative_tolerance * detail::bounding_box_diagonal(points);
  std::vector<double> distance;
  std::vector<std::size_t> counts(clusters);
  Matrix sums(static_cast<Eigen::Index>(clusters), points.cols());

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    result.inertia = detail::assign_points(points, result.centroids, result.assignment, distance, options.mode);
    result.inertia_history.push_back(result.inertia);
    result.iterations_run = iter + 1;

    sums.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(result.assignment[i])) += points.row(static_cast<Eigen::Index>(i));
      ++counts[result.assignment[i]];
    }
    Matrix updated = result.centroids;
    for (std::size_t m = 0; m < clusters; ++m) {
      if (counts[m] > 0) updated.row(static_cast<Eigen::Index>(m)) = sums.row(static_cast<Eigen::Index>(m)) / static_cast<double>(counts[m]);
    }
    // Empty clusters take the point farthest from its own centroid.
    for (std::size_t m = 0; m < clusters; ++m) {
      if (counts[m] > 0) continue;
      std::size_t far = 0;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[result.assignment[i]] <= 1) continue;
        const double dist = detail::squared_distance(points, static_cast<Eigen::Index>(i), updated,
                                                     static_cast<Eigen::Index>(result.assignment[i]));
        if (dist > far_dist) {
          far_dist = dist;
          far = i;
        }
      }
      --counts[result.assignment[far]];
      result.assignment[far] = m;
      counts[m] = 1;
      updated.row(static_cast<Eigen::Index>(m)) = points.row(static_cast<Eigen::Index>(far));
    }

    const double shift = (updated - result.centroids).rowwise().norm().maxCoeff();
    result.centroids = std::move(updated);
    if (shift < tolerance) break;
  }

  result.inertia = detail::assign_points(points, result.centroids, result.assignment, distance, options.mode);
  if (result.inertia_history.empty() || result.inertia < result.inertia_history.back()) {
    result.inertia_history.push_back(result.inertia);
  }
  // A final assignment can strand a centroid; repair so every cluster has members.
  std::fill(counts.begin(), counts.end(), 0);
  for (std::size_t a : result.assignment) ++counts[a];
  for (std::size_t m = 0; m < clusters; ++m) {
    if (counts[m] > 0) continue;
    std::size_t far = 0;
    double far_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[result.assignment[i]] <= 1) continue;
      if (distance[i] > far_dist) {
        far_dist = distance[i];
        far = i;
      }
    }
    --counts[result.assignment[far]];
    result.assignment[far] = m;
    counts[m] = 1;
    result.centroids.row(static_cast<Eigen::Index>(m)) = points.row(static_cast<Eigen::Index>(far));
    result.inertia -= distance[far];
    distance[far] = 0.0;
  }
  return result;
}

/// k-means++ seeded Lloyd's algorithm. Deterministic given the seed.
inline KMeansResult kmeans(const Matrix& points, std::size_t clusters, std::uint64_t seed,
                           const KMeansOptions& options = {}) {
  require(clusters >= 1, "k-means needs at least one cluster");
  const auto n = static_cast<std::size_t>(points.rows());
  if (n < clusters) {
    fail(ErrorKind::kPrecondition, "k-means got " + std::to_string(n) + " points for " + std::to_string(clusters) +
                                       " clusters; lower the cluster count");
  }
  require(points.allFinite(), "k-means input contains non-finite values");
  if (detail::count_distinct_rows(points, clusters) < clusters) {
    fail(ErrorKind::kPrecondition, "fewer than " + std::to_string(clusters) +
                                       " distinct points; lower the cluster count");
  }
  auto rng = make_rng(seed, {0x6b6du});
  return kmeans_from(points, kmeans_plus_plus(points, clusters, rng), options);
}

}  // namespace dgmil
