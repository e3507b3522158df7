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

// The weight-and-threshold meta-algorithm: cap user degrees, weight items,
// add keyed Gaussian noise, release items whose noisy weight reaches rho.

#ifndef DP_PARTITION_PIPELINE_HPP_
#define DP_PARTITION_PIPELINE_HPP_

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <utility>
#include <vector>

#include "dp_partition/calibration.hpp"
#include "dp_partition/core.hpp"
#include "dp_partition/parallel.hpp"
#include "dp_partition/random.hpp"
#include "dp_partition/weighters.hpp"

namespace dp_partition {

// Subsamples every user with more than delta0 items down to exactly delta0,
// uniformly without replacement. The shuffle for user u is keyed by
// (capping stream, u), independent of worker count.
inline UserSetCollection cap_degrees(const UserSetCollection& data,
                                     std::size_t delta0, const RunSeed& seed) {
  require(delta0 >= 1, "delta0 must be >= 1");
  const std::size_t n = data.num_users();
  std::vector<std::size_t> offsets(n + 1, 0);
  for (std::size_t u = 0; u < n; ++u) {
    offsets[u + 1] = offsets[u] + std::min(data.degree(u), delta0);
  }
  std::vector<ItemId> items(offsets[n]);
  const std::uint64_t stream = seed.stream(Substream::kCapping);
  parallel_for(0, n, [&](std::size_t u) {
    const auto row = data.items_of(u);
    auto out = items.begin() + static_cast<std::ptrdiff_t>(offsets[u]);
    if (row.size() <= delta0) {
      std::copy(row.begin(), row.end(), out);
      return;
    }
    std::vector<ItemId> scratch(row.begin(), row.end());
    CounterEngine engine(stream, u);
    for (std::size_t j = 0; j < delta0; ++j) {
      const std::size_t pick = j + bounded(engine(), scratch.size() - j);
      std::swap(scratch[j], scratch[pick]);
    }
    std::sort(scratch.begin(), scratch.begin() + delta0);
    std::copy_n(scratch.begin(), delta0, out);
  }, 256);
  UserSetCollection capped = UserSetCollection::from_csr(
      std::move(offsets), std::move(items), data.item_bound());
  capped.set_dictionary(data.dictionary());
  capped.set_user_labels(data.user_labels());
  return capped;
}

// w~(i) = w(i) + sigma * Z_i with Z_i a keyed function of (stream, i).
inline WeightMap add_noise(const WeightMap& w, double sigma,
                           std::uint64_t stream) {
  require(sigma > 0, "sigma must be > 0");
  WeightMap noisy(w.item_bound());
  const auto in = w.raw_values();
  const auto in_present = w.raw_present();
  auto out = noisy.raw_values();
  auto out_present = noisy.raw_present();
  parallel_for(0, w.item_bound(), [&](std::size_t i) {
    if (!in_present[i]) return;
    out[i] = in[i] + sigma * keyed_gaussian(stream, i);
    out_present[i] = 1;
  });
  return noisy;
}

// {i : w~(i) >= rho}, ascending.
inline std::vector<ItemId> threshold(const WeightMap& noisy, double rho) {
  std::vector<ItemId> out;
  const auto values = noisy.raw_values();
  const auto present = noisy.raw_present();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (present[i] && values[i] >= rho) out.push_back(item_id(i));
  }
  return out;
}

// A weighting algorithm with the sensitivity profile proved for it.
class Weighter {
 public:
  enum class Kind { kBasic, kMad };

  static Weighter basic() { return Weighter(Kind::kBasic); }
  static Weighter mad(AdaptiveConfig cfg, BiasMap biases = BiasMap(1.0, 1.0),
                      MadOptions options = {}) {
    Weighter w(Kind::kMad);
    w.cfg_ = cfg;
    w.biases_ = std::move(biases);
    w.options_ = options;
    return w;
  }

  Kind kind() const { return kind_; }
  const AdaptiveConfig& config() const { return cfg_; }
  const BiasMap& biases() const { return biases_; }

  // 1/sqrt(t) for Basic; b_max/sqrt(t) for MAD (1/sqrt(t) when unbiased).
  SensitivityProfile proved_profile() const {
    return kind_ == Kind::kBasic
               ? SensitivityProfile::inverse_sqrt(1.0)
               : SensitivityProfile::inverse_sqrt(biases_.b_max());
  }

  WeightMap operator()(const UserSetCollection& data, double tau,
                       RunMetrics* metrics = nullptr) const {
    if (kind_ == Kind::kBasic) return basic_weights(data, metrics);
    return mad_weights(data, tau, cfg_, biases_, options_, nullptr, metrics);
  }

 private:
  explicit Weighter(Kind kind) : kind_(kind) {}

  Kind kind_;
  AdaptiveConfig cfg_;
  BiasMap biases_{1.0, 1.0};
  MadOptions options_;
};

struct PipelineOptions {
  bool allow_profile_mismatch = false;
  // Input already capped (multi-round callers cap once up front).
  bool already_capped = false;
  // Noise substream index; rounds of one run must use distinct values.
  std::size_t noise_round = 0;
};

// Runs one round given a calibration and an arbitrary weighting callable
// weigh(capped_data, tau, metrics) -> WeightMap.
template <typename WeighFn>
SelectionResult run_weight_and_threshold(const UserSetCollection& data,
                                         const PrivacyBudget& budget,
                                         const CalibrationParams& calib,
                                         WeighFn&& weigh, const RunSeed& seed,
                                         const PipelineOptions& options) {
  RunMetrics metrics;
  internal::StageClock clock(&metrics);
  UserSetCollection capped_storage;
  const UserSetCollection* input = &data;
  if (!options.already_capped) {
    capped_storage = cap_degrees(data, calib.delta0, seed);
    input = &capped_storage;
    clock.mark("cap_degrees", data.num_entries());
  }
  WeightMap w = weigh(*input, calib.tau, &metrics);
  clock.mark("weights", input->num_entries());
  WeightMap noisy =
      add_noise(w, calib.sigma, seed.noise_stream(options.noise_round));
  clock.mark("add_noise", input->num_entries());
  std::vector<ItemId> selected = threshold(noisy, calib.rho);
  clock.mark("threshold", input->num_entries());

  metrics.output_size = selected.size();
  metrics.entries_processed = input->num_entries();
  metrics.total_epsilon = budget.epsilon;
  metrics.total_delta = budget.delta;
  metrics.rounds.push_back({budget.epsilon, budget.delta, calib.sigma,
                            calib.rho, calib.tau, calib.rho_argmax_t,
                            input->num_entries(), selected.size()});
  return SelectionResult(std::move(selected), std::move(noisy),
                         std::move(metrics));
}

// WeightAndThreshold with Basic or MAD. h must be the profile proved for the
// weighter unless options.allow_profile_mismatch is set.
inline SelectionResult weight_and_threshold(
    const UserSetCollection& data, const PrivacyBudget& budget,
    std::size_t delta0, const Weighter& weighter, const SensitivityProfile& h,
    double beta, const RunSeed& seed, const PipelineOptions& options = {}) {
  if (!options.allow_profile_mismatch) {
    require(h.same_bound(weighter.proved_profile()),
            "sensitivity profile " + h.describe() +
                " does not match the weighter's proved bound " +
                weighter.proved_profile().describe());
  }
  const CalibrationParams calib = calibrate(budget, delta0, h, beta);
  return run_weight_and_threshold(
      data, budget, calib,
      [&](const UserSetCollection& capped, double tau, RunMetrics* metrics) {
        return weighter(capped, tau, metrics);
      },
      seed, options);
}

}  // namespace dp_partition

#endif  // DP_PARTITION_PIPELINE_HPP_
