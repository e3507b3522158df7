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

// Sequential baselines that process users one at a time against a running
// weight vector: PolicyGaussian (l2 projection of the gap to tau) and
// GreedyUpdate (one unit on the heaviest item still below tau).

#ifndef DP_PARTITION_SEQUENTIAL_HPP_
#define DP_PARTITION_SEQUENTIAL_HPP_

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dp_partition/calibration.hpp"
#include "dp_partition/core.hpp"
#include "dp_partition/pipeline.hpp"
#include "dp_partition/random.hpp"

namespace dp_partition {

inline constexpr double kSequentialDefaultBeta = 4.0;

struct SequentialState {
  std::vector<double> weights;
  std::vector<std::uint8_t> seen;
  double tau = 0;
  std::size_t processed_users = 0;

  SequentialState(std::size_t item_bound, double threshold)
      : weights(item_bound, 0.0), seen(item_bound, 0), tau(threshold) {}

  WeightMap to_weight_map() const {
    WeightMap w(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (seen[i]) w.set(item_id(i), weights[i]);
    }
    return w;
  }
};

// One PolicyGaussian step: add the gap to tau, projected onto the unit l2
// ball. Returns the l2 norm of the addition.
inline double policy_gaussian_step(SequentialState& state,
                                   std::span<const ItemId> items) {
  double norm_sq = 0.0;
  for (ItemId id : items) {
    const double gap = std::max(0.0, state.tau - state.weights[index_of(id)]);
    norm_sq += gap * gap;
  }
  const double norm = std::sqrt(norm_sq);
  const double scale = norm > 1.0 ? 1.0 / norm : 1.0;
  for (ItemId id : items) {
    double& w = state.weights[index_of(id)];
    w += std::max(0.0, state.tau - w) * scale;
    state.seen[index_of(id)] = 1;
  }
  ++state.processed_users;
  return std::min(norm, 1.0);
}

// One GreedyUpdate step: +1 on the item with the largest weight still below
// tau (smallest id on ties). Returns whether anything was added. Only the
// incremented item joins the keyspace: degrees are not capped here, so a user
// may reach the noise stage with at most one novel key, never an unbounded
// number of zero-weight ones.
inline bool greedy_update_step(SequentialState& state,
                               std::span<const ItemId> items) {
  std::size_t best = 0;
  bool found = false;
  for (ItemId id : items) {
    const std::size_t i = index_of(id);
    const double w = state.weights[i];
    if (w < state.tau && (!found || w > state.weights[best])) {
      best = i;
      found = true;
    }
  }
  if (found) {
    state.weights[best] += 1.0;
    state.seen[best] = 1;
  }
  ++state.processed_users;
  return found;
}

// Users are visited in a permutation drawn from order_stream.
inline WeightMap policy_gaussian_weights(const UserSetCollection& data,
                                         double tau,
                                         std::uint64_t order_stream) {
  require(tau > 0, "tau must be > 0");
  SequentialState state(data.item_bound(), tau);
  for (std::size_t u : seeded_permutation(data.num_users(), order_stream)) {
    if (data.degree(u) > 0) policy_gaussian_step(state, data.items_of(u));
  }
  return state.to_weight_map();
}

inline WeightMap greedy_update_weights(const UserSetCollection& data,
                                       double tau,
                                       std::uint64_t order_stream) {
  SequentialState state(data.item_bound(), tau);
  for (std::size_t u : seeded_permutation(data.num_users(), order_stream)) {
    if (data.degree(u) > 0) greedy_update_step(state, data.items_of(u));
  }
  return state.to_weight_map();
}

// Full runs: PolicyGaussian is capped at delta0 and calibrated with
// h(t) = 1/sqrt(t); GreedyUpdate skips capping and uses h(t) = 1.
inline SelectionResult run_policy_gaussian(
    const UserSetCollection& data, const PrivacyBudget& budget,
    std::size_t delta0, const RunSeed& seed,
    double beta = kSequentialDefaultBeta) {
  const CalibrationParams calib = calibrate(
      budget, delta0, SensitivityProfile::inverse_sqrt(1.0), beta);
  const std::uint64_t order = seed.stream(Substream::kUserOrder);
  return run_weight_and_threshold(
      data, budget, calib,
      [&](const UserSetCollection& d, double tau, RunMetrics*) {
        return policy_gaussian_weights(d, tau, order);
      },
      seed, PipelineOptions{});
}

inline SelectionResult run_greedy_update(const UserSetCollection& data,
                                         const PrivacyBudget& budget,
                                         std::size_t delta0,
                                         const RunSeed& seed,
                                         double beta = kSequentialDefaultBeta) {
  const CalibrationParams calib =
      calibrate(budget, delta0, SensitivityProfile::constant(1.0), beta);
  const std::uint64_t order = seed.stream(Substream::kUserOrder);
  PipelineOptions options;
  options.already_capped = true;
  return run_weight_and_threshold(
      data, budget, calib,
      [&](const UserSetCollection& d, double tau, RunMetrics*) {
        return greedy_update_weights(d, tau, order);
      },
      seed, options);
}

}  // namespace dp_partition

#endif  // DP_PARTITION_SEQUENTIAL_HPP_
