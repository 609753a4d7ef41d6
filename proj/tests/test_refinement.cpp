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

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace {

using dgmil::InstanceLabel;
using dgmil::Matrix;

TEST(SelectExtremes, ForcedByOrdering) {
  // positive bag {9, 1}, negative bag {0, 5}
  const std::vector<double> scores{9, 1, 0, 5};
  const auto table = dgmil::make_bag_table({1, 2}, {1, 0}, {0, 0, 1, 1});
  const auto sel = dgmil::select_extremes(scores, {0, 0, 1, 1}, table, 0.5);
  EXPECT_EQ(sel.positives, (std::vector<std::size_t>{0}));
  EXPECT_EQ(sel.negatives, (std::vector<std::size_t>{2}));
}

TEST(SelectExtremes, TiesGoToLowestIndex) {
  std::vector<double> scores(12, 3.0);
  std::vector<std::size_t> bag_of(12, 0);
  bag_of[10] = bag_of[11] = 1;
  const auto table = dgmil::make_bag_table({1, 2}, {1, 0}, bag_of);
  const auto sel = dgmil::select_extremes(scores, bag_of, table, 0.1);
  EXPECT_EQ(sel.positives, (std::vector<std::size_t>{0}));
  EXPECT_EQ(sel.negatives, (std::vector<std::size_t>{10}));
}

TEST(SelectExtremes, CountsMembershipAndDisjointness) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n_bags = 2 + rng() % 6;
    std::vector<std::uint8_t> labels(n_bags);
    labels[0] = 0;
    labels[1] = 1;
    for (std::size_t b = 2; b < n_bags; ++b) labels[b] = static_cast<std::uint8_t>(rng() % 2);
    std::vector<std::size_t> bag_of;
    for (std::size_t b = 0; b < n_bags; ++b)
      for (std::size_t k = 0, m = 1 + rng() % 30; k < m; ++k) bag_of.push_back(b);
    std::vector<std::uint32_t> ids(n_bags);
    std::iota(ids.begin(), ids.end(), 0u);
    const auto table = dgmil::make_bag_table(ids, labels, bag_of);
    std::vector<double> scores(bag_of.size());
    for (auto& s : scores) s = std::round(u(rng) * 10);  // plenty of ties
    const double q = 0.01 + 0.49 * u(rng);
    const auto sel = dgmil::select_extremes(scores, bag_of, table, q);

    std::vector<std::size_t> pos_pool, neg_pool;
    for (std::size_t i = 0; i < bag_of.size(); ++i) (labels[bag_of[i]] ? pos_pool : neg_pool).push_back(i);
    const auto expected = [q](std::size_t pool) {
      return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(q * static_cast<double>(pool))));
    };
    EXPECT_EQ(sel.positives.size(), expected(pos_pool.size()));
    EXPECT_EQ(sel.negatives.size(), expected(neg_pool.size()));
    for (auto i : sel.positives) EXPECT_EQ(labels[bag_of[i]], 1);
    for (auto i : sel.negatives) EXPECT_EQ(labels[bag_of[i]], 0);

    // Brute force: every selected positive beats (or ties with a higher index) every unselected one.
    std::set<std::size_t> chosen(sel.positives.begin(), sel.positives.end());
    for (auto i : pos_pool) {
      if (chosen.count(i)) continue;
      for (auto c : chosen) EXPECT_TRUE(scores[c] > scores[i] || (scores[c] == scores[i] && c < i));
    }
    std::set<std::size_t> chosen_neg(sel.negatives.begin(), sel.negatives.end());
    for (auto i : neg_pool) {
      if (chosen_neg.count(i)) continue;
      for (auto c : chosen_neg) EXPECT_TRUE(scores[c] < scores[i] || (scores[c] == scores[i] && c < i));
    }
  }
}

TEST(SelectExtremes, Preconditions) {
  const std::vector<double> scores{1, 2};
  const auto only_pos = dgmil::make_bag_table({1}, {1}, {0, 0});
  EXPECT_THROW(dgmil::select_extremes(scores, {0, 0}, only_pos, 0.1), dgmil::Error);
  const auto mixed = dgmil::make_bag_table({1, 2}, {1, 0}, {0, 1});
  EXPECT_THROW(dgmil::select_extremes(scores, {0, 1}, mixed, 0.0), dgmil::Error);
  EXPECT_THROW(dgmil::select_extremes(scores, {0, 1}, mixed, 0.51), dgmil::Error);
  EXPECT_NO_THROW(dgmil::select_extremes(scores, {0, 1}, mixed, 0.5));
}

dgmil::DatasetSplit purity_split() {
  auto config = oracle::small_config(31);
  config.dim = 8;
  config.neg_bags = 20;
  config.pos_bags = 20;
  config.bag_size = 50;
  config.witness_rate = 0.2;  // witnesses outnumber the 10% taken, so precision can reach 1
  return dgmil::generate(config);
}

TEST(Refine, PseudoLabelsArePureOnSeparableData) {
  const auto split = purity_split();
  dgmil::RefinementConfig rc;
  rc.clusters = 3;
  rc.max_rounds = 1;
  const auto state = dgmil::refine(split.train.instances, split.train.bags, rc);
  const auto& sel = state.rounds.at(0).selection;
  const auto& labels = split.train.instances.labels;
  double pos_hits = 0, neg_hits = 0;
  for (auto i : sel.positives) pos_hits += labels[i] == InstanceLabel::kPositive;
  for (auto i : sel.negatives) neg_hits += labels[i] == InstanceLabel::kNegative;
  EXPECT_GT(pos_hits / static_cast<double>(sel.positives.size()), 0.9);
  EXPECT_GE(neg_hits / static_cast<double>(sel.negatives.size()), 0.9);
}

TEST(Refine, ZeroRoundsIsTheInitialSpace) {
  const auto split = dgmil::generate(oracle::small_config());
  dgmil::RefinementConfig rc;
  rc.clusters = 3;
  rc.max_rounds = 0;
  const auto state = dgmil::refine(split.train.instances, split.train.bags, rc);
  EXPECT_EQ(state.rounds_run(), 0u);
  EXPECT_EQ(state.features, split.train.instances.features);
  EXPECT_EQ(state.initial.scores.instance_scores.size(), split.train.instances.size());
  EXPECT_EQ(dgmil::apply_to_test(state, split.test.instances.features), split.test.instances.features);
}

TEST(Refine, OneRoundAppliesOneProjection) {
  const auto split = dgmil::generate(oracle::small_config());
  dgmil::RefinementConfig rc;
  rc.clusters = 3;
  rc.max_rounds = 1;
  const auto state = dgmil::refine(split.train.instances, split.train.bags, rc);
  ASSERT_EQ(state.rounds_run(), 1u);
  const Matrix expected = dgmil::remap_features(split.train.instances.features, state.rounds[0].heads);
  EXPECT_LE((state.features - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Refine, AuditTrailConsistency) {
  const auto split = dgmil::generate(oracle::small_config(3));
  dgmil::RefinementConfig rc;
  rc.clusters = 3;
  rc.max_rounds = 4;
  const auto state = dgmil::refine(split.train.instances, split.train.bags, rc);
  ASSERT_LE(state.rounds_run(), 4u);
  ASSERT_GE(state.rounds_run(), 1u);

  // Round by round, each space is the previous one through that round's head.
  Matrix space = split.train.instances.features;
  for (const auto& r : state.rounds) space = dgmil::remap_features(space, r.heads);
  EXPECT_LE((space - state.features).cwiseAbs().maxCoeff(), 1e-12);

  // Training instances through the test path land on their stored features.
  const Matrix via_test = dgmil::apply_to_test(state, split.train.instances.features);
  EXPECT_LE((via_test - state.features).cwiseAbs().maxCoeff(), 1e-12);

  // The collapsed map agrees with the per-round chain.
  const auto heads = dgmil::round_heads(state);
  const auto collapsed = dgmil::collapse_projections(heads, split.train.instances.dim());
  const Matrix one_shot = dgmil::remap_features(split.train.instances.features, collapsed);
  EXPECT_LE((one_shot - state.features).cwiseAbs().maxCoeff(),
            1e-10 * std::max(1.0, state.features.cwiseAbs().maxCoeff()));

  for (std::size_t k = 0; k < state.rounds.size(); ++k) {
    EXPECT_EQ(state.rounds[k].round, k + 1);
    EXPECT_TRUE(state.rounds[k].heads.all_finite());
    EXPECT_FALSE(state.rounds[k].loss_curve.empty());
    if (k > 0) { EXPECT_FALSE(state.rounds[k].selection == state.rounds[k - 1].selection); }
  }
}

TEST(Refine, DeterministicInReproducibleMode) {
  const auto split = dgmil::generate(oracle::small_config(4));
  dgmil::RefinementConfig rc;
  rc.clusters = 3;
  rc.max_rounds = 3;
  const auto a = dgmil::refine(split.train.instances, split.train.bags, rc);
  const auto b = dgmil::refine(split.train.instances, split.train.bags, rc);
  ASSERT_EQ(a.rounds_run(), b.rounds_run());
  EXPECT_EQ(a.features, b.features);
  for (std::size_t k = 0; k < a.rounds.size(); ++k) {
    EXPECT_TRUE(a.rounds[k].selection == b.rounds[k].selection);
    EXPECT_EQ(a.rounds[k].loss_curve, b.rounds[k].loss_curve);
    EXPECT_EQ(a.rounds[k].heads.projection, b.rounds[k].heads.projection);
    EXPECT_EQ(a.rounds[k].fit.kmeans_seed, b.rounds[k].fit.kmeans_seed);
  }
}

TEST(Refine, StopsOnRepeatedSelection) {
  // Two clean blobs: the extremes are the same instances every round.
  Matrix x(40, 2);
  std::vector<std::size_t> bag_of(40);
  std::vector<InstanceLabel> labels(40, InstanceLabel::kNegative);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (Eigen::Index i = 0; i < 40; ++i) {
    bag_of[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i / 10);
    const bool witness = i >= 20 && i % 10 == 0;
    if (witness) labels[static_cast<std::size_t>(i)] = InstanceLabel::kPositive;
    x(i, 0) = (witness ? 8.0 : 0.0) + noise(rng);
    x(i, 1) = noise(rng);
  }
  const auto ds = oracle::make_dataset(x, bag_of, {0, 0, 1, 1}, labels);
  dgmil::RefinementConfig rc;
  rc.clusters = 1;
  rc.max_rounds = 20;
  const auto state = dgmil::refine(ds.instances, ds.bags, rc);
  EXPECT_TRUE(state.converged);
  EXPECT_LT(state.rounds_run(), 20u);
}

TEST(Refine, ErrorsCarryRoundIndex) {
  const auto split = dgmil::generate(oracle::small_config(6));
  dgmil::RefinementConfig rc;
  rc.clusters = 3;
  rc.max_rounds = 2;
  rc.training.learning_rate = 1e300;
  try {
    dgmil::refine(split.train.instances, split.train.bags, rc);
    FAIL() << "expected divergence";
  } catch (const dgmil::Error& e) {
    EXPECT_EQ(e.kind(), dgmil::ErrorKind::kDivergence);
    EXPECT_NE(std::string(e.what()).find("refinement round 1"), std::string::npos);
  }
}

TEST(Refine, Preconditions) {
  auto split = dgmil::generate(oracle::small_config());
  dgmil::RefinementConfig rc;
  rc.clusters = 3;
  EXPECT_THROW(dgmil::apply_to_test(dgmil::refine(split.train.instances, split.train.bags,
                                                  [&] { auto c = rc; c.max_rounds = 0; return c; }()),
                                    Matrix::Zero(2, 3)),
               dgmil::Error);
  for (auto& bag : split.train.bags.bags) bag.label = 0;
  EXPECT_THROW(dgmil::refine(split.train.instances, split.train.bags, rc), dgmil::Error);
}

TEST(Refine, FastModeMatchesWithinTolerance) {
  auto config = oracle::small_config(8);
  config.neg_bags = 30;
  config.pos_bags = 30;
  config.bag_size = 100;  // 6000 instances, enough to engage the thread split
  const auto split = dgmil::generate(config);
  dgmil::RefinementConfig rc;
  rc.clusters = 3;
  rc.max_rounds = 2;
  const auto a = dgmil::refine(split.train.instances, split.train.bags, rc);
  rc.mode = dgmil::ExecMode::kFast;
  const auto b = dgmil::refine(split.train.instances, split.train.bags, rc);
  ASSERT_EQ(a.rounds_run(), b.rounds_run());
  const auto& sa = a.final_fit().scores.instance_scores;
  const auto& sb = b.final_fit().scores.instance_scores;
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_NEAR(sa[i], sb[i], 1e-6 * std::max(1.0, sa[i]));
}

}  // namespace
