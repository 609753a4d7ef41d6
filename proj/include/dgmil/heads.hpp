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
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dgmil/common.hpp"

namespace dgmil {

/// Linear projection head (z -> W z + b, d -> d) followed by a linear
/// classification head (p -> w.p + c) and a sigmoid. No hidden nonlinearity.
struct HeadParams {
  Matrix projection;       // W, d x d
  Vector projection_bias;  // b
  Vector classifier;       // w
  double classifier_bias = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(projection.rows()); }

  static HeadParams identity(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    return {Matrix::Identity(n, n), Vector::Zero(n), Vector::Zero(n), 0.0};
  }

  bool all_finite() const {
    return projection.allFinite() && projection_bias.allFinite() && classifier.allFinite() &&
           std::isfinite(classifier_bias);
  }
};

struct HeadGradient {
  Matrix projection;
  Vector projection_bias;
  Vector classifier;
  double classifier_bias = 0.0;
};

struct TrainingConfig {
  std::size_t max_epochs = 200;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Early stop once the per-epoch loss decrease stays below this for
  /// `patience` consecutive epochs.
  double min_loss_decrease = 1e-4;
  std::size_t patience = 10;
  /// 0 means full batch.
  std::size_t batch_size = 0;
  /// Start the projection at the identity (random otherwise).
  bool identity_init = true;
};

struct TrainingResult {
  HeadParams params;
  std::vector<double> loss_curve;  // one entry per epoch
};

namespace detail {

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// Classifier logits for every row of x.
inline Vector head_logits(const HeadParams& p, const Matrix& x) {
  // (x W^T + 1 b^T) w + c  ==  x (W^T w) + (b.w + c)
  const Vector folded = p.projection.transpose() * p.classifier;
  const double offset = p.projection_bias.dot(p.classifier) + p.classifier_bias;
  return (x * folded).array() + offset;
}

/// Mean binary cross-entropy of sigmoid(logit) against {0,1} targets.
inline double head_loss(const HeadParams& p, const Matrix& x, std::span<const double> targets) {
  const Vector logits = head_logits(p, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    total += detail::softplus(logits[i]) - targets[static_cast<std::size_t>(i)] * logits[i];
  }
  return total / static_cast<double>(logits.size());
}

/// Loss and analytic gradient with respect to every head parameter.
inline double head_loss_and_gradient(const HeadParams& p, const Matrix& x, std::span<const double> targets,
                                     HeadGradient& grad) {
  require(static_cast<std::size_t>(x.rows()) == targets.size(), "targets and rows differ in count");
  require(x.rows() > 0, "empty training batch");
  const Vector logits = head_logits(p, x);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  Vector delta(logits.size());
  double total = 0.0;
  double delta_sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double t = targets[static_cast<std::size_t>(i)];
    total += detail::softplus(logits[i]) - t * logits[i];
    delta[i] = (detail::sigmoid(logits[i]) - t) * inv_n;
    delta_sum += delta[i];
  }
  // dL/dP = delta w^T with P = x W^T + 1 b^T, so every projection gradient is rank one.
  const Vector x_delta = x.transpose() * delta;
  grad.projection = p.classifier * x_delta.transpose();
  grad.projection_bias = p.classifier * delta_sum;
  grad.classifier = p.projection * x_delta + p.projection_bias * delta_sum;
  grad.classifier_bias = delta_sum;
  return total * inv_n;
}

/// Affine projection of every row: out_i = W z_i + b. Rows are computed
/// independently with a fixed summation order, so a row maps to the same bits
/// whatever matrix it is part of.
inline Matrix remap_features(const Matrix& features, const HeadParams& heads, ExecMode mode = ExecMode::kReproducible) {
  if (static_cast<std::size_t>(features.cols()) != heads.dim()) {
    fail(ErrorKind::kPrecondition, "features have dimension " + std::to_string(features.cols()) +
                                       ", projection head expects " + std::to_string(heads.dim()));
  }
  const Eigen::Index d = features.cols();
  Matrix out(features.rows(), d);
  parallel_for(static_cast<std::size_t>(features.rows()), mode, [&](std::size_t begin, std::size_t end) {
    for (auto i = static_cast<Eigen::Index>(begin); i < static_cast<Eigen::Index>(end); ++i) {
      for (Eigen::Index r = 0; r < d; ++r) {
        double acc = heads.projection_bias[r];
        for (Eigen::Index c = 0; c < d; ++c) acc += heads.projection(r, c) * features(i, c);
        out(i, r) = acc;
      }
    }
  });
  return out;
}

/// Projection head of `second` applied after `first`, collapsed to one affine map.
inline HeadParams compose(const HeadParams& second, const HeadParams& first) {
  require(second.dim() == first.dim(), "cannot compose heads of different dimension");
  HeadParams out = second;
  out.projection = second.projection * first.projection;
  out.projection_bias = second.projection * first.projection_bias + second.projection_bias;
  return out;
}

/// Starting point for head training. Identity projection when
/// `identity_projection` is set, otherwise every weight and bias is drawn
/// uniformly from (-1/sqrt(d), 1/sqrt(d)).
inline HeadParams initial_heads(std::size_t d, std::uint64_t seed, bool identity_projection = false) {
  HeadParams p = HeadParams::identity(d);
  auto rng = make_rng(seed, {0x6865u});
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> init(-bound, bound);
  if (!identity_projection) {
    for (Eigen::Index r = 0; r < p.projection.rows(); ++r)
      for (Eigen::Index c = 0; c < p.projection.cols(); ++c) p.projection(r, c) = init(rng);
    for (Eigen::Index j = 0; j < p.projection_bias.size(); ++j) p.projection_bias[j] = init(rng);
  }
  for (Eigen::Index j = 0; j < p.classifier.size(); ++j) p.classifier[j] = init(rng);
  p.classifier_bias = init(rng);
  return p;
}

/// Adam on binary cross-entropy with a cosine learning-rate schedule that
/// decays to zero over max_epochs.
inline TrainingResult train_heads(const Matrix& x, std::span<const double> targets, const TrainingConfig& config,
                                  std::uint64_t seed) {
  require(static_cast<std::size_t>(x.rows()) == targets.size(), "targets and rows differ in count");
  const bool has_pos = std::any_of(targets.begin(), targets.end(), [](double t) { return t > 0.5; });
  const bool has_neg = std::any_of(targets.begin(), targets.end(), [](double t) { return t <= 0.5; });
  require(has_pos && has_neg, "head training needs both pseudo-label classes");
  require(config.max_epochs >= 1, "head training needs at least one epoch");

  const auto d = static_cast<std::size_t>(x.cols());
  TrainingResult result{initial_heads(d, seed, config.identity_init), {}};
  HeadParams& p = result.params;

  HeadGradient m{Matrix::Zero(x.cols(), x.cols()), Vector::Zero(x.cols()), Vector::Zero(x.cols()), 0.0};
  HeadGradient v = m;
  HeadGradient g;
  std::size_t step = 0;

  const auto n = static_cast<std::size_t>(x.rows());
  const std::size_t batch = (config.batch_size == 0 || config.batch_size >= n) ? n : config.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto shuffle_rng = make_rng(seed, {0x6268u});

  std::size_t slow_epochs = 0;
  const double pi = std::acos(-1.0);
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = 0.5 * config.learning_rate *
                      (1.0 + std::cos(pi * static_cast<double>(epoch) / static_cast<double>(config.max_epochs)));
    if (batch < n) std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      double loss;
      if (count == n) {
        loss = head_loss_and_gradient(p, x, targets, g);
      } else {
        Matrix xb(static_cast<Eigen::Index>(count), x.cols());
        std::vector<double> tb(count);
        for (std::size_t k = 0; k < count; ++k) {
          xb.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(order[start + k]));
          tb[k] = targets[order[start + k]];
        }
        loss = head_loss_and_gradient(p, xb, tb, g);
      }
      if (!std::isfinite(loss)) {
        fail(ErrorKind::kDivergence, "non-finite loss in head training at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss * static_cast<double>(count);

      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      auto adam = [&](auto& param, const auto& grad, auto& m1, auto& m2) {
        m1 = config.beta1 * m1 + (1.0 - config.beta1) * grad;
        m2 = config.beta2 * m2 + (1.0 - config.beta2) * grad.cwiseProduct(grad);
        param -= (lr * (m1 / bc1).array() / ((m2 / bc2).array().sqrt() + config.adam_epsilon)).matrix();
      };
      adam(p.projection, g.projection, m.projection, v.projection);
      adam(p.projection_bias, g.projection_bias, m.projection_bias, v.projection_bias);
      adam(p.classifier, g.classifier, m.classifier, v.classifier);
      m.classifier_bias = config.beta1 * m.classifier_bias + (1.0 - config.beta1) * g.classifier_bias;
      v.classifier_bias = config.beta2 * v.classifier_bias + (1.0 - config.beta2) * g.classifier_bias * g.classifier_bias;
      p.classifier_bias -= lr * (m.classifier_bias / bc1) / (std::sqrt(v.classifier_bias / bc2) + config.adam_epsilon);
    }
    epoch_loss /= static_cast<double>(n);
    result.loss_curve.push_back(epoch_loss);

    if (epoch > 0) {
      const double decrease = result.loss_curve[epoch - 1] - epoch_loss;
      slow_epochs = decrease < config.min_loss_decrease ? slow_epochs + 1 : 0;
      if (slow_epochs >= config.patience) break;
    }
  }
  if (!p.all_finite()) fail(ErrorKind::kDivergence, "head parameters became non-finite");
  return result;
}

}  // namespace dgmil
