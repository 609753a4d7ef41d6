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
#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dgmil/common.hpp"
#include "dgmil/dataset.hpp"

namespace dgmil {

/// Gaussian-mixture MIL data: g negative phenotypes with means on a sphere,
/// one positive phenotype displaced radially outward from a negative one.
struct SyntheticConfig {
  std::size_t dim = 32;
  std::size_t phenotypes = 10;
  std::size_t neg_bags = 50;
  std::size_t pos_bags = 50;
  std::size_t bag_size = 200;
  double witness_rate = 0.05;
  /// Distance from the positive mean to its nearest negative mean, in units of
  /// the average within-phenotype standard deviation (which is 1).
  double separation = 6.0;
  bool entangle = false;
  std::size_t distractor_dims = 0;
  /// Standard deviation of each appended distractor dimension.
  double distractor_scale = 10.0;
  /// Radius of the sphere holding the negative phenotype means.
  double radius = 10.0;
  std::uint64_t seed = 0;

  std::size_t emitted_dim() const { return dim + distractor_dims; }
  std::size_t witnesses_per_bag() const {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(witness_rate * static_cast<double>(bag_size))));
  }

  void validate() const {
    require(dim >= 1, "synthetic dim must be >= 1");
    require(phenotypes >= 1, "synthetic phenotypes must be >= 1");
    require(bag_size >= 1, "synthetic bag_size must be >= 1");
    require(neg_bags + pos_bags >= 1, "synthetic data needs at least one bag");
    require(witness_rate > 0.0 && witness_rate <= 1.0, "witness rate must lie in (0, 1]");
    require(separation >= 0.0 && std::isfinite(separation), "separation must be finite and >= 0");
    require(distractor_scale > 0.0 && std::isfinite(distractor_scale), "distractor scale must be > 0");
    require(radius >= 0.0 && std::isfinite(radius), "radius must be finite and >= 0");
  }
};

struct GaussianComponent {
  Vector mean;
  Matrix covariance;
  Matrix factor;  // lower Cholesky factor
  double log_det = 0.0;
};

/// Parameters the generator samples from; a pure function of the config.
struct GenerativeModel {
  std::vector<GaussianComponent> negatives;
  GaussianComponent positive;
  std::size_t anchor = 0;  // negative phenotype the positives are displaced from
  Matrix entangling;       // identity when entangle = false
  double entangling_condition = 1.0;
};

namespace detail {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = normal(rng);
  return m;
}

/// Haar-distributed rotation from the QR of a Gaussian matrix.
inline Matrix random_rotation(std::size_t d, std::mt19937_64& rng) {
  const Matrix a = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

/// Q diag(lambda) Q^T with lambda log-uniform over one decade, rescaled to mean 1.
inline Matrix random_spd(std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector lambda(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda[i] = std::pow(10.0, unit(rng));
  lambda /= lambda.mean();
  const Matrix q = random_rotation(d, rng);
  Matrix s = q * lambda.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

inline GaussianComponent make_component(Vector mean, Matrix covariance) {
  GaussianComponent c;
  Eigen::LLT<Matrix> llt(covariance);
  c.factor = llt.matrixL();
  c.log_det = 2.0 * c.factor.diagonal().array().log().sum();
  c.mean = std::move(mean);
  c.covariance = std::move(covariance);
  return c;
}

/// log N(x; mean, cov) without the -d/2 log(2 pi) constant.
inline double log_density(const GaussianComponent& c, const Vector& x) {
  const Vector y = c.factor.triangularView<Eigen::Lower>().solve(x - c.mean);
  return -0.5 * y.squaredNorm() - 0.5 * c.log_det;
}

inline float to_stored(double v) { return static_cast<float>(v); }

}  // namespace detail

inline GenerativeModel make_generative_model(const SyntheticConfig& config) {
  config.validate();
  const std::size_t d = config.dim;
  auto rng = make_rng(config.seed, {0x7061u});
  std::normal_distribution<double> normal(0.0, 1.0);

  GenerativeModel model;
  for (std::size_t k = 0; k < config.phenotypes; ++k) {
    Vector direction(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < direction.size(); ++j) direction[j] = normal(rng);
    direction.normalize();
    Matrix cov = detail::random_spd(d, rng);
    model.negatives.push_back(detail::make_component(config.radius * direction, std::move(cov)));
  }
  std::uniform_int_distribution<std::size_t> pick(0, config.phenotypes - 1);
  model.anchor = pick(rng);
  const GaussianComponent& anchor = model.negatives[model.anchor];
  Vector outward = anchor.mean;
  if (outward.norm() > 0.0) {
    outward.normalize();
  } else {
    outward = Vector::Unit(static_cast<Eigen::Index>(d), 0);
  }
  model.positive = detail::make_component(anchor.mean + config.separation * outward, anchor.covariance);

  // Entangling draws come from their own stream so that toggling it leaves
  // every other draw unchanged.
  const auto n = static_cast<Eigen::Index>(d);
  model.entangling = Matrix::Identity(n, n);
  if (config.entangle) {
    auto erng = make_rng(config.seed, {0x656eu});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double kappa = 10.0 + 90.0 * unit(erng);
    Vector s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = std::pow(kappa, unit(erng));
    s[0] = 1.0;
    if (n > 1) s[n - 1] = kappa;
    const Matrix u = detail::random_rotation(d, erng);
    const Matrix v = detail::random_rotation(d, erng);
    model.entangling = u * s.asDiagonal() * v.transpose();
    model.entangling_condition = n > 1 ? kappa : 1.0;
  }
  return model;
}

namespace detail {

inline Dataset sample_split(const GenerativeModel& model, const SyntheticConfig& config, std::uint32_t split,
                            std::uint32_t first_bag_id) {
  const std::size_t d = config.dim;
  const std::size_t n_bags = config.neg_bags + config.pos_bags;
  const std::size_t n = n_bags * config.bag_size;
  const std::size_t witnesses = std::min(config.witnesses_per_bag(), config.bag_size);

  auto label_rng = make_rng(config.seed, {0x6c62u, split});
  auto component_rng = make_rng(config.seed, {0x636fu, split});
  auto noise_rng = make_rng(config.seed, {0x6e6fu, split});
  auto distractor_rng = make_rng(config.seed, {0x6474u, split});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, config.phenotypes - 1);

  Dataset ds;
  ds.instances.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.emitted_dim()));
  ds.instances.bag_of.resize(n);
  ds.instances.labels.resize(n);
  std::vector<std::uint32_t> ids(n_bags);
  std::vector<std::uint8_t> bag_labels(n_bags);

  Vector x(static_cast<Eigen::Index>(d));
  Vector eps(static_cast<Eigen::Index>(d));
  std::vector<std::size_t> slots(config.bag_size);
  std::size_t row = 0;
  for (std::size_t b = 0; b < n_bags; ++b) {
    const bool positive_bag = b >= config.neg_bags;
    ids[b] = first_bag_id + static_cast<std::uint32_t>(b);
    bag_labels[b] = positive_bag ? 1 : 0;
    std::vector<bool> is_witness(config.bag_size, false);
    if (positive_bag) {
      std::iota(slots.begin(), slots.end(), std::size_t{0});
      std::shuffle(slots.begin(), slots.end(), label_rng);
      for (std::size_t k = 0; k < witnesses; ++k) is_witness[slots[k]] = true;
    }
    for (std::size_t k = 0; k < config.bag_size; ++k, ++row) {
      const std::size_t component = pick(component_rng);
      for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = normal(noise_rng);
      const GaussianComponent& source = is_witness[k] ? model.positive : model.negatives[component];
      x = source.mean + source.factor * eps;
      const Vector z = model.entangling * x;
      auto out = ds.instances.features.row(static_cast<Eigen::Index>(row));
      for (Eigen::Index j = 0; j < z.size(); ++j) out[j] = static_cast<double>(to_stored(z[j]));
      for (std::size_t j = 0; j < config.distractor_dims; ++j) {
        out[static_cast<Eigen::Index>(d + j)] =
            static_cast<double>(to_stored(config.distractor_scale * normal(distractor_rng)));
      }
      ds.instances.bag_of[row] = b;
      ds.instances.labels[row] = is_witness[k] ? InstanceLabel::kPositive : InstanceLabel::kNegative;
    }
  }
  ds.bags = make_bag_table(ids, bag_labels, ds.instances.bag_of);
  return ds;
}

}  // namespace detail

/// Train and test splits with the same bag counts. Features are rounded to
/// float precision so that a DGMF round trip is lossless.
inline DatasetSplit generate(const SyntheticConfig& config) {
  const GenerativeModel model = make_generative_model(config);
  DatasetSplit split;
  split.train = detail::sample_split(model, config, 1, 0);
  split.test = detail::sample_split(model, config, 2,
                                    static_cast<std::uint32_t>(config.neg_bags + config.pos_bags));
  return split;
}

/// Log-likelihood ratio log p_pos(z) - log p_neg(z) under the generator.
inline std::vector<double> bayes_scores(const SyntheticConfig& config, const GenerativeModel& model,
                                        const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != config.emitted_dim()) {
    fail(ErrorKind::kPrecondition, "instances have dimension " + std::to_string(features.cols()) +
                                       " but the config emits " + std::to_string(config.emitted_dim()));
  }
  const auto d = static_cast<Eigen::Index>(config.dim);
  const Eigen::PartialPivLU<Matrix> unentangle(model.entangling);
  const double log_g = std::log(static_cast<double>(model.negatives.size()));
  std::vector<double> out(static_cast<std::size_t>(features.rows()));
  std::vector<double> terms(model.negatives.size());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const Vector z = features.row(i).head(d).transpose();
    const Vector x = unentangle.solve(z);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < terms.size(); ++k) {
      terms[k] = detail::log_density(model.negatives[k], x);
      peak = std::max(peak, terms[k]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - peak);
    const double log_neg = peak + std::log(acc) - log_g;
    out[static_cast<std::size_t>(i)] = detail::log_density(model.positive, x) - log_neg;
  }
  return out;
}

inline std::vector<double> bayes_scores(const SyntheticConfig& config, const Matrix& features) {
  return bayes_scores(config, make_generative_model(config), features);
}

}  // namespace dgmil
