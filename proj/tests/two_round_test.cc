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

#include "dp_partition/two_round.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "dp_partition/pipeline.hpp"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace dp_partition {
namespace {

using ::dp_partition::testing_util::RandomSets;
using ::dp_partition::testing_util::Row;
using ::dp_partition::testing_util::Sets;
using ::testing::ElementsAre;

const double kFractions19[] = {0.1, 0.9};

TEST(RoundBudgetSplitTest, FractionsSumExactly) {
  const double fractions[] = {0.05, 0.15, 0.8};
  const auto split =
      RoundBudgetSplit::from_fractions(PrivacyBudget(1.0, 1e-5), fractions);
  ASSERT_EQ(split.size(), 3u);
  EXPECT_DOUBLE_EQ(split[0].epsilon, 0.05);
  EXPECT_DOUBLE_EQ(split[1].delta, 1.5e-6);
  const double eps_sum = split[0].epsilon + split[1].epsilon + split[2].epsilon;
  const double delta_sum = split[0].delta + split[1].delta + split[2].delta;
  EXPECT_LE(eps_sum, 1.0);
  EXPECT_LE(delta_sum, 1e-5);
  EXPECT_DOUBLE_EQ(eps_sum, 1.0);
  EXPECT_DOUBLE_EQ(delta_sum, 1e-5);
}

TEST(RoundBudgetSplitTest, RejectsBadFractions) {
  const double bad_sum[] = {0.5, 0.6};
  const double zero[] = {0.0, 1.0};
  EXPECT_THROW(RoundBudgetSplit::from_fractions(PrivacyBudget(), bad_sum),
               InvalidArgument);
  EXPECT_THROW(RoundBudgetSplit::from_fractions(PrivacyBudget(), zero),
               InvalidArgument);
  EXPECT_THROW(RoundBudgetSplit({}), InvalidArgument);
}

TEST(RemoveItemsTest, DropsItemsAndEmptyUsers) {
  auto data = Sets({{0, 1}, {1}, {2, 3}});
  data.set_user_labels({"a", "b", "c"});
  const auto out = remove_items(data, membership_mask(4, {item_id(1), item_id(3)}));
  ASSERT_EQ(out.num_users(), 2u);
  EXPECT_THAT(Row(out, 0), ElementsAre(item_id(0)));
  EXPECT_THAT(Row(out, 1), ElementsAre(item_id(2)));
  EXPECT_THAT(out.user_labels(), ElementsAre("a", "c"));
  EXPECT_EQ(out.item_bound(), 4u);
}

TEST(ConfidenceBoundsTest, ClampsLowerBoundAtZero) {
  WeightMap noisy(2);
  noisy.set(item_id(0), 10.0);
  noisy.set(item_id(1), 1.0);
  const auto b = confidence_bounds(noisy, 2.0, 1.0, 3.0);
  EXPECT_EQ(b.lb[item_id(0)], 8.0);
  EXPECT_EQ(b.ub[item_id(0)], 16.0);
  EXPECT_EQ(b.lb[item_id(1)], 0.0);
  EXPECT_EQ(b.ub[item_id(1)], 7.0);
  for (ItemId id : noisy.keys()) EXPECT_GE(b.ub[id], b.lb[id]);
}

TEST(BiasFromLowerBoundTest, Formula) {
  EXPECT_EQ(bias_from_lower_bound(10.0, 20.0), 0.5);
  EXPECT_EQ(bias_from_lower_bound(10.0, 5.0), 1.0);
  EXPECT_EQ(bias_from_lower_bound(10.0, 0.0), 1.0);
  EXPECT_EQ(bias_from_lower_bound(10.0, -3.0), 1.0);
}

TEST(BiasFromLowerBoundTest, HalfBiasClampedAtMinimum) {
  // lb = 2 rho gives bias 0.5, which is b_min, so the item receives
  // max{0.5, 0.5}/sqrt(d) from each of its users.
  BiasMap b(0.5, 2.0);
  b.set(item_id(0), bias_from_lower_bound(3.0, 6.0));
  const auto w = user_weights(std::vector<ItemId>{item_id(0), item_id(1),
                                                  item_id(2), item_id(3)},
                              b);
  EXPECT_EQ(w[0], 0.5 / 2.0);
}

TEST(Mad2rTest, RejectsWrongRoundCount) {
  const double three[] = {0.2, 0.3, 0.5};
  EXPECT_THROW(mad2r(Sets({{0}}),
                     RoundBudgetSplit::from_fractions(PrivacyBudget(), three),
                     Mad2rParams{}, RunSeed(1)),
               InvalidArgument);
}

TEST(Mad2rTest, VacuousSecondRound) {
  // 2000 users on one item: selected in round 1 with overwhelming
  // probability, leaving nothing for round 2.
  std::vector<std::vector<ItemId>> sets(2000, {item_id(0)});
  const auto data = UserSetCollection::from_sets(sets);
  const auto split =
      RoundBudgetSplit::from_fractions(PrivacyBudget(1.0, 1e-5), kFractions19);
  const auto r = mad2r(data, split, Mad2rParams{}, RunSeed(3));
  EXPECT_THAT(r.selected(), ElementsAre(item_id(0)));
  ASSERT_EQ(r.metrics().rounds.size(), 2u);
  EXPECT_EQ(r.metrics().rounds[1].input_entries, 0u);
  EXPECT_EQ(r.metrics().rounds[1].selected, 0u);
}

TEST(Mad2rTest, RoundsAreDisjointAndBudgetIsAccounted) {
  std::mt19937_64 gen(12);
  const auto data = RandomSets(gen, 30000, 600, 12);
  const PrivacyBudget total(1.0, 1e-5);
  const auto split = RoundBudgetSplit::from_fractions(total, kFractions19);
  const auto r = mad2r(data, split, Mad2rParams{}, RunSeed(21));
  const auto& m = r.metrics();
  ASSERT_EQ(m.rounds.size(), 2u);
  EXPECT_DOUBLE_EQ(m.total_epsilon, 1.0);
  EXPECT_DOUBLE_EQ(m.total_delta, 1e-5);
  EXPECT_EQ(m.rounds[0].epsilon, split[0].epsilon);
  EXPECT_EQ(m.rounds[1].delta, split[1].delta);
  EXPECT_EQ(m.rounds[0].selected + m.rounds[1].selected, r.selected().size());
  EXPECT_TRUE(std::is_sorted(r.selected().begin(), r.selected().end()));
  EXPECT_EQ(std::adjacent_find(r.selected().begin(), r.selected().end()),
            r.selected().end());
  // Round 2 sees strictly fewer entries (round-1 items removed).
  EXPECT_LT(m.rounds[1].input_entries, m.rounds[0].input_entries);
  // Round 1 runs unbiased MAD at h = 1/sqrt(t); round 2 at b_max/sqrt(t).
  const auto c1 = calibrate(split[0], 100, SensitivityProfile::inverse_sqrt(1), 2);
  const auto c2 = calibrate(split[1], 100, SensitivityProfile::inverse_sqrt(2), 2);
  EXPECT_EQ(m.rounds[0].rho, c1.rho);
  EXPECT_EQ(m.rounds[1].rho, c2.rho);
}

TEST(Mad2rTest, CapsOnceBeforeRoundOne) {
  std::vector<std::vector<ItemId>> sets;
  for (int u = 0; u < 50; ++u) {
    std::vector<ItemId> row;
    for (std::size_t i = 0; i < 300; ++i) row.push_back(item_id(i));
    sets.push_back(row);
  }
  const auto data = UserSetCollection::from_sets(sets);
  const auto split =
      RoundBudgetSplit::from_fractions(PrivacyBudget(1.0, 1e-5), kFractions19);
  const auto r = mad2r(data, split, Mad2rParams{}, RunSeed(4));
  EXPECT_EQ(r.metrics().rounds[0].input_entries, 50u * 100u);
}

TEST(Mad2rTest, Deterministic) {
  std::mt19937_64 gen(13);
  const auto data = RandomSets(gen, 5000, 300, 8);
  const auto split =
      RoundBudgetSplit::from_fractions(PrivacyBudget(1.0, 1e-5), kFractions19);
  EXPECT_EQ(mad2r(data, split, Mad2rParams{}, RunSeed(2)).selected(),
            mad2r(data, split, Mad2rParams{}, RunSeed(2)).selected());
}

TEST(DpSipsTest, SingleRoundEqualsBasicPipeline) {
  std::mt19937_64 gen(14);
  const auto data = RandomSets(gen, 8000, 400, 30);
  const double one[] = {1.0};
  const PrivacyBudget budget(1.0, 1e-5);
  const auto sips = dp_sips(
      data, RoundBudgetSplit::from_fractions(budget, one), 20, RunSeed(6));
  const auto basic = weight_and_threshold(
      data, budget, 20, Weighter::basic(), SensitivityProfile::inverse_sqrt(),
      0.0, RunSeed(6));
  EXPECT_EQ(sips.selected(), basic.selected());
}

TEST(DpSipsTest, LaterRoundsNeverRescoreSelectedItems) {
  std::mt19937_64 gen(15);
  const auto data = RandomSets(gen, 20000, 800, 10);
  const double fractions[] = {0.05, 0.15, 0.8};
  const auto r = dp_sips(
      data,
      RoundBudgetSplit::from_fractions(PrivacyBudget(1.0, 1e-5), fractions),
      100, RunSeed(7));
  const auto& rounds = r.metrics().rounds;
  ASSERT_EQ(rounds.size(), 3u);
  std::size_t total = 0;
  for (const auto& round : rounds) total += round.selected;
  EXPECT_EQ(total, r.selected().size());
  EXPECT_EQ(std::adjacent_find(r.selected().begin(), r.selected().end()),
            r.selected().end());
  EXPECT_GE(rounds[0].input_entries, rounds[1].input_entries);
  EXPECT_GE(rounds[1].input_entries, rounds[2].input_entries);
}

}  // namespace
}  // namespace dp_partition
