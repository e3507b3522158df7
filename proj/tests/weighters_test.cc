//
// Copyright 2026 The dp_partition Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dp_partition/weighters.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <vector>

#include "dp_partition/parallel.hpp"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace dp_partition {
namespace {

using ::dp_partition::testing_util::RandomSets;
using ::dp_partition::testing_util::Sets;
using ::testing::DoubleNear;
using ::testing::ElementsAre;

// Scalar MAD over std::map, written directly from the stage definitions. Used
// as an oracle for the vectorized implementation. User weights come from
// `user_weights`, which has its own tests.
std::map<std::size_t, double> ScalarMad(const UserSetCollection& data,
                                        double tau, double d_max, double b_min,
                                        const BiasMap& biases) {
  const double alpha = b_min - 1.0 / (2.0 * std::sqrt(d_max));
  const double min_degree = std::ceil(1.0 / (b_min * b_min));
  std::map<std::size_t, double> w_init, w;
  std::vector<bool> adaptive(data.num_users());
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    const double d = static_cast<double>(data.degree(u));
    adaptive[u] = d >= min_degree && d <= d_max;
    for (ItemId id : data.items_of(u)) {
      w_init[index_of(id)] += adaptive[u] ? 1.0 / d : 0.0;
    }
  }
  std::map<std::size_t, double> r;
  for (const auto& [i, v] : w_init) {
    r[i] = v > tau ? (v - tau) / v : 0.0;
    w[i] = std::min(v, tau);
  }
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    const auto items = data.items_of(u);
    const double d = static_cast<double>(items.size());
    double e = 0.0;
    if (adaptive[u]) {
      for (ItemId id : items) e += r[index_of(id)];
      e /= d;
    }
    const auto wb = user_weights(items, biases);
    for (std::size_t k = 0; k < items.size(); ++k) {
      const std::size_t i = index_of(items[k]);
      w[i] += alpha * e / d_max;
      w[i] += wb[k] - (adaptive[u] ? 1.0 / d : 0.0);
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Basic
// ---------------------------------------------------------------------------

TEST(BasicWeightsTest, Examples) {
  const auto w1 = basic_weights(Sets({{0, 1, 2, 3}}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(w1[item_id(i)], 0.5);
  EXPECT_EQ(basic_weights(Sets({{0}, {0}}))[item_id(0)], 2.0);
  const auto w3 = basic_weights(Sets({{0, 1}, {1}}));
  EXPECT_NEAR(w3[item_id(1)], 1.70711, 1e-5);
  EXPECT_NEAR(w3[item_id(0)], 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(BasicWeightsTest, SkipsEmptyUsersAndKeysAreTheUnion) {
  const auto data = Sets({{}, {2}, {}}, 5);
  const auto w = basic_weights(data);
  EXPECT_THAT(w.keys(), ElementsAre(item_id(2)));
  EXPECT_EQ(w[item_id(2)], 1.0);
}

// ---------------------------------------------------------------------------
// UserWeights
// ---------------------------------------------------------------------------

std::vector<ItemId> Ids(std::initializer_list<std::size_t> ids) {
  std::vector<ItemId> out;
  for (std::size_t i : ids) out.push_back(item_id(i));
  return out;
}

double NormSq(const std::vector<double>& w) {
  double s = 0;
  for (double x : w) s += x * x;
  return s;
}

TEST(UserWeightsTest, UnbiasedIsUniform) {
  const auto w = user_weights(Ids({0, 1, 2, 3}), BiasMap(1.0, 1.0));
  EXPECT_THAT(w, ElementsAre(0.5, 0.5, 0.5, 0.5));
  EXPECT_DOUBLE_EQ(NormSq(w), 1.0);
}

TEST(UserWeightsTest, OneBiasedItemLeavesBudgetToTheOther) {
  BiasMap b(0.5, 2.0);
  b.set(item_id(0), 0.6);
  UserWeightsStats stats;
  const auto w = user_weights(Ids({0, 1}), b, &stats);
  EXPECT_NEAR(w[0], 0.424264, 1e-6);
  EXPECT_NEAR(w[0], 0.6 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(w[1], 0.905539, 1e-6);
  EXPECT_NEAR(w[1], std::sqrt(1.0 - 0.18), 1e-15);
  EXPECT_EQ(stats.iterations, 0);
}

TEST(UserWeightsTest, AllBiasedItemsAreRaisedToTheUnitSphere) {
  // Both clamp to b_min/sqrt(2); every item is below 1/sqrt(2), so the
  // rescaling loop raises both (factor 2) until the norm reaches 1.
  BiasMap b(0.5, 2.0);
  b.set(item_id(0), 0.1);
  b.set(item_id(1), 0.1);
  UserWeightsStats stats;
  const auto w = user_weights(Ids({0, 1}), b, &stats);
  EXPECT_NEAR(w[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(w[1], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(NormSq(w), 1.0, 1e-12);
  EXPECT_EQ(stats.iterations, 1);
  EXPECT_FALSE(stats.hit_iteration_cap);
}

TEST(UserWeightsTest, UnbiasedFillIsCappedAtMaxBias) {
  // Three items biased to 0.5/sqrt(4) leave 1 - 3/16 for one unbiased item,
  // more than b_max/sqrt(4) = 0.5 allows; the loop then raises the biased
  // items up to the remaining budget.
  BiasMap b(0.5, 1.0);
  for (std::size_t i = 0; i < 3; ++i) b.set(item_id(i), 0.5);
  const auto w = user_weights(Ids({0, 1, 2, 3}), b);
  EXPECT_NEAR(w[3], 0.5, 1e-15);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(w[k], 0.5, 1e-12);
  EXPECT_NEAR(NormSq(w), 1.0, 1e-12);
}

TEST(UserWeightsTest, RejectsEmptySet) {
  EXPECT_THROW(user_weights({}, BiasMap(1.0, 1.0)), InvalidArgument);
}

TEST(UserWeightsProperty, BoundsHoldForRandomInputs) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> degree(1, 60);
  for (int trial = 0; trial < 20000; ++trial) {
    const double b_min = 0.5 + 0.5 * unit(gen);
    const double b_max = 1.0 + 3.0 * unit(gen);
    BiasMap biases(b_min, b_max);
    const std::size_t d = degree(gen);
    std::vector<ItemId> items;
    for (std::size_t k = 0; k < d; ++k) {
      items.push_back(item_id(k));
      const double u = unit(gen);
      if (u < 0.5) biases.set(item_id(k), std::max(1e-3, unit(gen)));
    }
    UserWeightsStats stats;
    const auto w = user_weights(items, biases, &stats);
    const double sqrt_d = std::sqrt(static_cast<double>(d));
    for (double x : w) {
      ASSERT_GE(x, b_min / sqrt_d - 1e-15);
      ASSERT_LE(x, b_max / sqrt_d + 1e-15);
    }
    ASSERT_LE(NormSq(w), 1.0 + 1e-12);
    ASSERT_FALSE(stats.hit_iteration_cap);
  }
}

// ---------------------------------------------------------------------------
// MAD
// ---------------------------------------------------------------------------

TEST(MadWeightsTest, SingleUserBelowThreshold) {
  const auto w = mad_weights(Sets({{0, 1}}), 10.0, 50.0);
  EXPECT_NEAR(w[item_id(0)], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(w[item_id(1)], 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(MadWeightsTest, TruncationAndReroute) {
  MadTrace trace;
  const auto w = mad_weights(Sets({{0}, {0}, {0}}), 1.5, AdaptiveConfig(4, 1.0),
                             BiasMap(1.0, 1.0), {}, &trace);
  EXPECT_EQ(trace.w_init[0], 3.0);
  EXPECT_EQ(trace.excess_ratio[0], 0.5);
  EXPECT_EQ(trace.w_trunc[0], 1.5);
  EXPECT_THAT(trace.user_excess, ElementsAre(0.5, 0.5, 0.5));
  EXPECT_NEAR(trace.w_reroute[0], 3 * 0.09375, 1e-15);
  EXPECT_NEAR(w[item_id(0)], 1.78125, 1e-15);
}

TEST(MadWeightsTest, EqualsBasicWhenNothingExceedsTau) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto data = RandomSets(gen, 30, 200, 8);
    // Degree <= 8 and at most 30 users: no item's w_init can reach 31.
    const auto mad = mad_weights(data, 31.0, 6.0);
    const auto basic = basic_weights(data);
    ASSERT_EQ(mad.keys(), basic.keys());
    for (ItemId id : basic.keys()) {
      ASSERT_NEAR(mad[id], basic[id], 1e-12);
    }
  }
}

TEST(MadWeightsTest, NonAdaptiveUsersOnlyAddUserWeights) {
  // Degree 5 > d_max = 4: no initial weight, no reroute.
  MadTrace trace;
  const auto w = mad_weights(Sets({{0, 1, 2, 3, 4}, {0, 1, 2, 3, 4}}), 1.0,
                             AdaptiveConfig(4, 1.0), BiasMap(1.0, 1.0), {},
                             &trace);
  EXPECT_THAT(trace.adaptive, ElementsAre(0, 0));
  EXPECT_NEAR(w[item_id(0)], 2.0 / std::sqrt(5.0), 1e-15);
}

TEST(MadWeightsTest, RejectsUnprovedParametersUnlessOverridden) {
  const auto data = Sets({{0}});
  EXPECT_THROW(mad_weights(data, 0.5, 10.0), InvalidArgument);
  EXPECT_THROW(mad_weights(data, 2.0, 3.0), InvalidArgument);
  MadOptions unsafe;
  unsafe.unsafe_parameters = true;
  EXPECT_NO_THROW(mad_weights(data, 0.5, 3.0, unsafe));
}

TEST(MadWeightsTest, RejectsMismatchedBiasClamp) {
  EXPECT_THROW(mad_weights(Sets({{0}}), 2.0, AdaptiveConfig(10, 0.5),
                           BiasMap(1.0, 2.0)),
               InvalidArgument);
}

TEST(MadWeightsTest, MatchesScalarOracle) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto data = RandomSets(gen, 40, 25, 12);
    const double b_min = trial % 2 ? 0.5 : 1.0;
    const double b_max = trial % 3 ? 2.0 : 1.0;
    const double tau = 1.0 + 3.0 * unit(gen);
    const double d_max = 4.0 + 8.0 * unit(gen);
    BiasMap biases(b_min, b_max);
    if (trial % 4 != 0) {
      for (std::size_t i = 0; i < 25; ++i) {
        if (unit(gen) < 0.4) biases.set(item_id(i), 0.05 + 0.95 * unit(gen));
      }
    }
    const auto w =
        mad_weights(data, tau, AdaptiveConfig(d_max, b_min), biases);
    const auto oracle = ScalarMad(data, tau, d_max, b_min, biases);
    ASSERT_EQ(w.size(), oracle.size());
    for (const auto& [i, v] : oracle) {
      ASSERT_NEAR(w[item_id(i)], v, 1e-12) << "trial " << trial << " item " << i;
    }
  }
}

TEST(MadWeightsProperty, DominancePrecursorAndThresholdFloor) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 300; ++trial) {
    const auto data = RandomSets(gen, 200, 30, 10);
    const double tau = 2.0 + (trial % 7);
    MadTrace trace;
    const auto mad = mad_weights(data, tau, AdaptiveConfig(6, 1.0),
                                 BiasMap(1.0, 1.0), {}, &trace);
    const auto basic = basic_weights(data);
    for (ItemId id : basic.keys()) {
      if (trace.w_init[index_of(id)] <= tau) {
        ASSERT_GE(mad[id], basic[id] - 1e-12);
      } else {
        ASSERT_GE(mad[id], tau - 1e-12);
      }
    }
  }
}

TEST(MadWeightsProperty, L1BudgetPerAdaptiveUser) {
  std::mt19937_64 gen(29);
  const double d_max = 6.0;
  const AdaptiveConfig cfg(d_max, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto data = RandomSets(gen, 100, 20, 6);
    MadTrace trace;
    mad_weights(data, 2.0, cfg, BiasMap(1.0, 1.0), {}, &trace);
    for (std::size_t u = 0; u < data.num_users(); ++u) {
      if (!trace.adaptive[u]) continue;
      const double d = static_cast<double>(data.degree(u));
      const double rerouted = d * cfg.alpha * trace.user_excess[u] / d_max;
      ASSERT_LE(rerouted, cfg.alpha * trace.user_excess[u] + 1e-15);
      if (d == d_max) {
        ASSERT_NEAR(rerouted, cfg.alpha * trace.user_excess[u], 1e-15);
      }
      ASSERT_GE(trace.user_excess[u], 0.0);
      ASSERT_LT(trace.user_excess[u], 1.0);
    }
  }
}

TEST(MadWeightsProperty, MonotoneUnderAddingAUser) {
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 500; ++trial) {
    const auto base = RandomSets(gen, 50, 15, 6);
    std::vector<std::vector<ItemId>> sets;
    for (std::size_t u = 0; u < base.num_users(); ++u) {
      sets.emplace_back(base.items_of(u).begin(), base.items_of(u).end());
    }
    std::vector<ItemId> extra;
    std::uniform_int_distribution<std::size_t> item(0, 19);
    for (int k = 0; k < 1 + trial % 6; ++k) extra.push_back(item_id(item(gen)));
    sets.push_back(extra);
    const auto ext = UserSetCollection::from_sets(std::move(sets), 20);
    const auto padded = UserSetCollection::from_csr(
        base.offsets(), {base.entries().begin(), base.entries().end()}, 20);
    MadTrace t0, t1;
    const AdaptiveConfig cfg(4 + trial % 5, trial % 2 ? 0.5 : 1.0);
    BiasMap biases(cfg.b_min, 2.0);
    mad_weights(padded, 1.0 + trial % 3, cfg, biases, {}, &t0);
    mad_weights(ext, 1.0 + trial % 3, cfg, biases, {}, &t1);
    for (std::size_t i = 0; i < 20; ++i) {
      ASSERT_GE(t1.w_init[i], t0.w_init[i]);
      ASSERT_GE(t1.w_trunc[i], t0.w_trunc[i]);
      ASSERT_GE(t1.w_reroute[i], t0.w_reroute[i]);
    }
  }
}

TEST(MadWeightsProperty, IndependentOfWorkerCount) {
  std::mt19937_64 gen(37);
  const auto data = RandomSets(gen, 60000, 3000, 20);
  BiasMap biases(0.5, 2.0);
  for (std::size_t i = 0; i < 3000; i += 3) biases.set(item_id(i), 0.4);
  const std::size_t saved = worker_count();
  set_worker_count(1);
  const auto w1 = mad_weights(data, 3.0, AdaptiveConfig(10, 0.5), biases);
  const auto b1 = basic_weights(data);
  set_worker_count(4);
  const auto w4 = mad_weights(data, 3.0, AdaptiveConfig(10, 0.5), biases);
  const auto b4 = basic_weights(data);
  set_worker_count(saved);
  EXPECT_TRUE(w1 == w4);
  EXPECT_TRUE(b1 == b4);
}

TEST(MadWeightsProperty, KeysAreTheObservedUnion) {
  std::mt19937_64 gen(41);
  const auto data = RandomSets(gen, 30, 100, 5);
  const auto w = mad_weights(data, 2.0, 8.0);
  EXPECT_EQ(w.keys(), observed_union(data));
  EXPECT_EQ(basic_weights(data).keys(), observed_union(data));
}

}  // namespace
}  // namespace dp_partition
