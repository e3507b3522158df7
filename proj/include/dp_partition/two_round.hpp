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

// Multi-round selection with a split privacy budget.
//
//   mad2r   - round 1 runs unbiased MAD; round 2 drops items already found or
//             whose round-1 upper confidence bound is below rho_2, biases
//             items whose lower bound is already high, and runs biased MAD.
//   dp_sips - iterated Basic, removing previously selected items.
//
// Both cap degrees once, before the first round.

#ifndef DP_PARTITION_TWO_ROUND_HPP_
#define DP_PARTITION_TWO_ROUND_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "dp_partition/calibration.hpp"
#include "dp_partition/core.hpp"
#include "dp_partition/pipeline.hpp"
#include "dp_partition/weighters.hpp"

namespace dp_partition {

class RoundBudgetSplit {
 public:
  explicit RoundBudgetSplit(std::vector<PrivacyBudget> rounds)
      : rounds_(std::move(rounds)) {
    require(!rounds_.empty(), "a budget split needs at least one round");
  }

  // Splits epsilon and delta by the same fractions. The last round takes the
  // remainder, rounded down where needed so that the parts, summed in order,
  // never exceed the total.
  static RoundBudgetSplit from_fractions(const PrivacyBudget& total,
                                         std::span<const double> fractions) {
    require(!fractions.empty(), "a budget split needs at least one round");
    double sum = 0.0;
    for (double f : fractions) {
      require(std::isfinite(f) && f > 0, "split fractions must be > 0");
      sum += f;
    }
    require(std::fabs(sum - 1.0) <= 1e-9, "split fractions must sum to 1");
    std::vector<PrivacyBudget> rounds;
    double eps_used = 0.0;
    double delta_used = 0.0;
    for (std::size_t r = 0; r + 1 < fractions.size(); ++r) {
      rounds.emplace_back(fractions[r] * total.epsilon,
                          fractions[r] * total.delta);
      eps_used += rounds.back().epsilon;
      delta_used += rounds.back().delta;
    }
    const auto remainder = [](double total_part, double used) {
      double rest = total_part - used;
      while (used + rest > total_part) rest = std::nextafter(rest, 0.0);
      return rest;
    };
    rounds.emplace_back(remainder(total.epsilon, eps_used),
                        remainder(total.delta, delta_used));
    return RoundBudgetSplit(std::move(rounds));
  }

  std::size_t size() const { return rounds_.size(); }
  const PrivacyBudget& operator[](std::size_t r) const { return rounds_[r]; }
  const std::vector<PrivacyBudget>& rounds() const { return rounds_; }

  PrivacyBudget total() const {
    double eps = 0.0;
    double delta = 0.0;
    for (const auto& b : rounds_) {
      eps += b.epsilon;
      delta += b.delta;
    }
    return PrivacyBudget(eps, std::min(delta, 1.0));
  }

 private:
  std::vector<PrivacyBudget> rounds_;
};

// Removes flagged items from every set and drops users left empty.
inline UserSetCollection remove_items(const UserSetCollection& data,
                                      const std::vector<std::uint8_t>& removed) {
  const auto is_removed = [&](ItemId id) {
    return index_of(id) < removed.size() && removed[index_of(id)] != 0;
  };
  const std::size_t n = data.num_users();
  std::vector<std::size_t> kept(n, 0);
  parallel_for(0, n, [&](std::size_t u) {
    for (ItemId id : data.items_of(u)) kept[u] += !is_removed(id);
  });
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> row_of(n);
  std::vector<std::string> labels;
  for (std::size_t u = 0; u < n; ++u) {
    if (kept[u] == 0) continue;
    row_of[u] = offsets.size() - 1;
    offsets.push_back(offsets.back() + kept[u]);
    if (!data.user_labels().empty()) labels.push_back(data.user_labels()[u]);
  }
  std::vector<ItemId> items(offsets.back());
  parallel_for(0, n, [&](std::size_t u) {
    if (kept[u] == 0) return;
    std::size_t pos = offsets[row_of[u]];
    for (ItemId id : data.items_of(u)) {
      if (!is_removed(id)) items[pos++] = id;
    }
  });
  UserSetCollection out = UserSetCollection::from_csr(
      std::move(offsets), std::move(items), data.item_bound());
  out.set_dictionary(data.dictionary());
  out.set_user_labels(std::move(labels));
  return out;
}

inline std::vector<std::uint8_t> membership_mask(
    std::size_t item_bound, const std::vector<ItemId>& items) {
  std::vector<std::uint8_t> mask(item_bound, 0);
  for (ItemId id : items) mask[index_of(id)] = 1;
  return mask;
}

struct ConfidenceBounds {
  WeightMap lb;  // max{0, w~ - c_lb * sigma}
  WeightMap ub;  // w~ + c_ub * sigma
  double c_lb = 0;
  double c_ub = 0;
};

inline ConfidenceBounds confidence_bounds(const WeightMap& noisy, double sigma,
                                          double c_lb, double c_ub) {
  require(c_lb >= 0 && c_ub >= 0, "confidence constants must be >= 0");
  ConfidenceBounds out{WeightMap(noisy.item_bound()),
                       WeightMap(noisy.item_bound()), c_lb, c_ub};
  for (ItemId id : noisy.keys()) {
    out.lb.set(id, std::max(0.0, noisy[id] - c_lb * sigma));
    out.ub.set(id, noisy[id] + c_ub * sigma);
  }
  return out;
}

// b = min{1, rho / lb}; a non-positive lower bound leaves the item unbiased.
inline double bias_from_lower_bound(double rho, double lb) {
  if (lb <= 0) return 1.0;
  return std::min(1.0, rho / lb);
}

struct Mad2rParams {
  std::size_t delta0 = 100;
  double d_max = 50;
  double beta = 2;
  double c_lb = 1;
  double c_ub = 3;
  double b_min = 0.5;
  double b_max = 2;
  MadOptions mad_options;
};

namespace internal {

inline SelectionResult merge_rounds(std::vector<SelectionResult> rounds,
                                    WeightMap noisy_weights) {
  std::vector<ItemId> selected;
  RunMetrics metrics;
  for (const auto& r : rounds) {
    selected.insert(selected.end(), r.selected().begin(), r.selected().end());
    const RunMetrics& m = r.metrics();
    metrics.rounds.insert(metrics.rounds.end(), m.rounds.begin(),
                          m.rounds.end());
    metrics.stages.insert(metrics.stages.end(), m.stages.begin(),
                          m.stages.end());
    metrics.total_epsilon += m.total_epsilon;
    metrics.total_delta += m.total_delta;
    metrics.entries_processed += m.entries_processed;
    metrics.user_weight_loop_cap_hits += m.user_weight_loop_cap_hits;
  }
  std::sort(selected.begin(), selected.end());
  metrics.output_size = selected.size();
  return SelectionResult(std::move(selected), std::move(noisy_weights),
                         std::move(metrics));
}

// Stages timed outside the per-round pipeline, such as the shared capping
// pass, go first.
inline void prepend_stages(SelectionResult& result, const RunMetrics& extra) {
  auto& stages = result.mutable_metrics().stages;
  stages.insert(stages.begin(), extra.stages.begin(), extra.stages.end());
}

}  // namespace internal

// Two-round MAD. The returned noisy weights are round 1's (they cover the
// whole observed union).
inline SelectionResult mad2r(const UserSetCollection& data,
                             const RoundBudgetSplit& split,
                             const Mad2rParams& params, const RunSeed& seed) {
  require(split.size() == 2, "MAD2R takes exactly two rounds");
  RunMetrics extra;
  internal::StageClock clock(&extra);
  const UserSetCollection capped = cap_degrees(data, params.delta0, seed);
  clock.mark("cap_degrees", data.num_entries());
  PipelineOptions options;
  options.already_capped = true;

  // Round 1: unbiased MAD.
  const CalibrationParams calib1 = calibrate(
      split[0], params.delta0, SensitivityProfile::inverse_sqrt(1.0),
      params.beta);
  const Weighter round1_weighter = Weighter::mad(
      AdaptiveConfig(params.d_max, 1.0), BiasMap(1.0, 1.0),
      params.mad_options);
  options.noise_round = 0;
  SelectionResult round1 = run_weight_and_threshold(
      capped, split[0], calib1,
      [&](const UserSetCollection& d, double tau, RunMetrics* m) {
        return round1_weighter(d, tau, m);
      },
      seed, options);
  const WeightMap& noisy1 = round1.noisy_weights_nonprivate();

  // Round 2: prune, bias, biased MAD.
  const CalibrationParams calib2 =
      calibrate(split[1], params.delta0,
                SensitivityProfile::inverse_sqrt(params.b_max), params.beta);
  const ConfidenceBounds bounds =
      confidence_bounds(noisy1, calib1.sigma, params.c_lb, params.c_ub);
  std::vector<std::uint8_t> removed =
      membership_mask(capped.item_bound(), round1.selected());
  for (ItemId id : noisy1.keys()) {
    if (bounds.ub[id] < calib2.rho) removed[index_of(id)] = 1;
  }
  internal::StageClock prune_clock(&extra);
  const UserSetCollection remaining = remove_items(capped, removed);

  BiasMap biases(params.b_min, params.b_max);
  for (ItemId id : observed_union(remaining)) {
    require(noisy1.contains(id),
            "round-2 item missing from round-1 noisy weights");
    biases.set(id, bias_from_lower_bound(calib2.rho, bounds.lb[id]));
  }
  prune_clock.mark("prune_and_bias", capped.num_entries());
  const Weighter round2_weighter = Weighter::mad(
      AdaptiveConfig(params.d_max, params.b_min), std::move(biases),
      params.mad_options);
  options.noise_round = 1;
  SelectionResult round2 = run_weight_and_threshold(
      remaining, split[1], calib2,
      [&](const UserSetCollection& d, double tau, RunMetrics* m) {
        return round2_weighter(d, tau, m);
      },
      seed, options);

  WeightMap noisy_out = noisy1;
  std::vector<SelectionResult> rounds;
  rounds.push_back(std::move(round1));
  rounds.push_back(std::move(round2));
  SelectionResult out =
      internal::merge_rounds(std::move(rounds), std::move(noisy_out));
  internal::prepend_stages(out, extra);
  return out;
}

// DP-SIPS: Basic in each round on the sets minus everything selected so far.
// The returned noisy weights are round 1's.
inline SelectionResult dp_sips(const UserSetCollection& data,
                               const RoundBudgetSplit& split,
                               std::size_t delta0, const RunSeed& seed) {
  RunMetrics extra;
  internal::StageClock clock(&extra);
  const UserSetCollection capped = cap_degrees(data, delta0, seed);
  clock.mark("cap_degrees", data.num_entries());
  const Weighter basic = Weighter::basic();
  const SensitivityProfile h = SensitivityProfile::inverse_sqrt(1.0);

  std::vector<SelectionResult> rounds;
  std::vector<std::uint8_t> removed(capped.item_bound(), 0);
  for (std::size_t r = 0; r < split.size(); ++r) {
    PipelineOptions options;
    options.already_capped = true;
    options.noise_round = r;
    const UserSetCollection remaining =
        r == 0 ? capped : remove_items(capped, removed);
    SelectionResult result =
        weight_and_threshold(remaining, split[r], delta0, basic, h,
                             /*beta=*/0.0, seed, options);
    for (ItemId id : result.selected()) removed[index_of(id)] = 1;
    rounds.push_back(std::move(result));
  }
  WeightMap noisy_out = rounds.front().noisy_weights_nonprivate();
  SelectionResult out =
      internal::merge_rounds(std::move(rounds), std::move(noisy_out));
  internal::prepend_stages(out, extra);
  return out;
}

}  // namespace dp_partition

#endif  // DP_PARTITION_TWO_ROUND_HPP_
