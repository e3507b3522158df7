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

#include "dp_partition/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <set>
#include <vector>

#include "dp_partition/calibration.hpp"
#include "dp_partition/parallel.hpp"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace dp_partition {
namespace {

using ::dp_partition::testing_util::RandomSets;
using ::dp_partition::testing_util::Row;
using ::dp_partition::testing_util::Sets;
using ::testing::ElementsAre;
using ::testing::IsEmpty;

UserSetCollection OneUser(std::size_t degree) {
  std::vector<ItemId> row;
  for (std::size_t i = 0; i < degree; ++i) row.push_back(item_id(i));
  return UserSetCollection::from_sets({row});
}

TEST(CapDegreesTest, UnderCapUnchanged) {
  const auto data = Sets({{1, 4, 7}});
  const auto capped = cap_degrees(data, 100, RunSeed(1));
  EXPECT_THAT(Row(capped, 0), ElementsAre(item_id(1), item_id(4), item_id(7)));
}

TEST(CapDegreesTest, OverCapKeepsExactlyDelta0Members) {
  const auto data = OneUser(200);
  const auto capped = cap_degrees(data, 100, RunSeed(1));
  ASSERT_EQ(capped.degree(0), 100u);
  const auto row = capped.items_of(0);
  EXPECT_TRUE(std::is_sorted(row.begin(), row.end()));
  EXPECT_EQ(std::adjacent_find(row.begin(), row.end()), row.end());
  for (ItemId id : row) EXPECT_LT(index_of(id), 200u);
}

TEST(CapDegreesTest, DeterministicPerSeed) {
  const auto data = OneUser(200);
  const auto a = cap_degrees(data, 10, RunSeed(9));
  const auto b = cap_degrees(data, 10, RunSeed(9));
  const auto c = cap_degrees(data, 10, RunSeed(10));
  EXPECT_TRUE(std::ranges::equal(a.items_of(0), b.items_of(0)));
  EXPECT_FALSE(std::ranges::equal(a.items_of(0), c.items_of(0)));
}

TEST(CapDegreesTest, InclusionIsUniform) {
  // Each of 10 items is kept with probability 3/10.
  const auto data = OneUser(10);
  std::vector<std::size_t> kept(10, 0);
  constexpr int kRuns = 30000;
  for (int s = 0; s < kRuns; ++s) {
    const auto capped = cap_degrees(data, 3, RunSeed(s));
    for (ItemId id : capped.items_of(0)) {
      ++kept[index_of(id)];
    }
  }
  const double se = std::sqrt(0.3 * 0.7 / kRuns);
  for (std::size_t k : kept) EXPECT_NEAR(k / double(kRuns), 0.3, 5 * se);
}

TEST(CapDegreesTest, RejectsZeroCap) {
  EXPECT_THROW(cap_degrees(Sets({{0}}), 0, RunSeed(1)), InvalidArgument);
}

TEST(AddNoiseTest, KeyedDeterminism) {
  WeightMap w(3);
  w.set(item_id(0), 1.0);
  w.set(item_id(2), 5.0);
  const auto a = add_noise(w, 2.0, 123);
  const auto b = add_noise(w, 2.0, 123);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a.contains(item_id(1)));
  // The draw for an item does not depend on which other items are present.
  WeightMap only(3);
  only.set(item_id(2), 5.0);
  EXPECT_EQ(add_noise(only, 2.0, 123)[item_id(2)], a[item_id(2)]);
}

TEST(AddNoiseTest, MomentsOverAMillionItems) {
  constexpr std::size_t kItems = 1'000'000;
  const double sigma = 3.0;
  WeightMap w(kItems);
  for (std::size_t i = 0; i < kItems; ++i) w.set(item_id(i), 0.0);
  const auto noisy = add_noise(w, sigma, 77);
  double sum = 0, sum_sq = 0;
  for (double v : noisy.raw_values()) {
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / kItems;
  EXPECT_NEAR(mean, 0.0, 4 * sigma / 1000);
  EXPECT_NEAR(std::sqrt(sum_sq / kItems - mean * mean), sigma, 0.01 * sigma);
}

TEST(ThresholdTest, InclusiveBoundary) {
  EXPECT_THAT(threshold(WeightMap(0), 1.0), IsEmpty());
  WeightMap w(3);
  w.set(item_id(0), 2.5);
  w.set(item_id(1), 2.5 - 1e-9);
  w.set(item_id(2), 7.0);
  EXPECT_THAT(threshold(w, 2.5), ElementsAre(item_id(0), item_id(2)));
}

TEST(WeightAndThresholdTest, EmptyDatasetSelectsNothing) {
  const auto r = weight_and_threshold(
      UserSetCollection(), PrivacyBudget(1.0, 1e-5), 100, Weighter::basic(),
      SensitivityProfile::inverse_sqrt(), 0.0, RunSeed(1));
  EXPECT_THAT(r.selected(), IsEmpty());
  EXPECT_EQ(r.metrics().output_size, 0u);
}

TEST(WeightAndThresholdTest, RejectsMismatchedProfile) {
  const auto data = Sets({{0}});
  EXPECT_THROW(weight_and_threshold(data, PrivacyBudget(), 100,
                                    Weighter::basic(),
                                    SensitivityProfile::constant(1.0), 0.0,
                                    RunSeed(1)),
               InvalidArgument);
  BiasMap biased(0.5, 2.0);
  EXPECT_THROW(weight_and_threshold(
                   data, PrivacyBudget(), 100,
                   Weighter::mad(AdaptiveConfig(50, 0.5), biased),
                   SensitivityProfile::inverse_sqrt(1.0), 2.0, RunSeed(1)),
               InvalidArgument);
  PipelineOptions override_check;
  override_check.allow_profile_mismatch = true;
  EXPECT_NO_THROW(weight_and_threshold(data, PrivacyBudget(), 100,
                                       Weighter::basic(),
                                       SensitivityProfile::constant(1.0), 0.0,
                                       RunSeed(1), override_check));
}

TEST(WeightAndThresholdTest, SingleUserIsReleasedWithProbabilityAtMostHalfDelta) {
  // Noise stage only: w(a) = 1 = h(1) and rho is calibrated for it.
  const auto c = calibrate(PrivacyBudget(1.0, 1e-5), 100,
                           SensitivityProfile::inverse_sqrt(), 0.0);
  constexpr std::size_t kRuns = 1'000'000;
  std::size_t released = 0;
  for (std::size_t s = 0; s < kRuns; ++s) {
    released += 1.0 + c.sigma * keyed_gaussian(RunSeed(s).noise_stream(0), 0) >=
                c.rho;
  }
  const double bound = 5e-6;
  EXPECT_LE(released / double(kRuns),
            bound + 3 * std::sqrt(bound * (1 - bound) / kRuns));
}

TEST(WeightAndThresholdTest, ResultInvariants) {
  std::mt19937_64 gen(3);
  const auto data = RandomSets(gen, 20000, 300, 30);
  const PrivacyBudget budget(1.0, 1e-5);
  const auto r = weight_and_threshold(
      data, budget, 20, Weighter::mad(AdaptiveConfig(10, 1.0)),
      SensitivityProfile::inverse_sqrt(), 2.0, RunSeed(5));
  const auto& noisy = r.noisy_weights_nonprivate();
  const auto& round = r.metrics().rounds.at(0);
  const auto u = observed_union(data);
  const std::set<ItemId> universe(u.begin(), u.end());
  EXPECT_FALSE(r.selected().empty());
  for (ItemId id : noisy.keys()) {
    EXPECT_TRUE(universe.count(id));
    const bool selected =
        std::binary_search(r.selected().begin(), r.selected().end(), id);
    EXPECT_EQ(selected, noisy[id] >= round.rho);
  }
  // Basic sigma/rho match the closed-form first-round quantities.
  const double sigma = solve_sigma(PrivacyBudget(1.0, 5e-6));
  EXPECT_EQ(round.sigma, sigma);
  EXPECT_EQ(round.rho,
            compute_rho(sigma, 1e-5, 20, SensitivityProfile::inverse_sqrt()).rho);
  EXPECT_EQ(round.tau, round.rho + 2.0 * round.sigma);
  EXPECT_EQ(r.metrics().total_epsilon, 1.0);
  EXPECT_EQ(r.metrics().total_delta, 1e-5);
  EXPECT_LE(r.metrics().entries_processed, data.num_entries());
}

TEST(WeightAndThresholdTest, IdenticalAcrossWorkerCounts) {
  std::mt19937_64 gen(4);
  const auto data = RandomSets(gen, 50000, 2000, 150);
  const std::size_t saved = worker_count();
  std::vector<std::vector<ItemId>> outputs;
  for (std::size_t workers : {1u, 3u, 8u}) {
    set_worker_count(workers);
    outputs.push_back(weight_and_threshold(
                          data, PrivacyBudget(1.0, 1e-5), 100,
                          Weighter::mad(AdaptiveConfig(50, 1.0)),
                          SensitivityProfile::inverse_sqrt(), 2.0, RunSeed(8))
                          .selected());
  }
  set_worker_count(saved);
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_EQ(outputs[0], outputs[2]);
}

}  // namespace
}  // namespace dp_partition
