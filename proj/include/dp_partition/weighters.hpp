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

// Weighting algorithms with unit l2 sensitivity:
//
//   basic_weights  - every user adds 1/sqrt(|S_u|) to each of its items.
//   user_weights   - one user's biased l2-bounded allocation.
//   mad_weights    - max-adaptive-degree weighting: users of moderate degree
//                    first send l1-bounded weight, weight above the adaptive
//                    threshold tau is truncated and a discounted share of the
//                    excess is rerouted to the contributing users' other
//                    items, then every user tops up to its l2 allocation.
//
// All per-item sums are gathers over ItemIndex in ascending user order, so
// the weights are bit-identical for any worker count.

#ifndef DP_PARTITION_WEIGHTERS_HPP_
#define DP_PARTITION_WEIGHTERS_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dp_partition/core.hpp"
#include "dp_partition/parallel.hpp"

namespace dp_partition {

namespace internal {

// Sums per-entry contributions into per-item totals, starting from init(i),
// for every item with at least one entry. Writes only observed items.
template <typename Init, typename Sink>
void gather_by_item(const ItemIndex& index, std::span<const double> contrib,
                    Init&& init, Sink&& sink) {
  parallel_blocks(0, index.num_items(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto entries = index.entries_of(i);
      if (entries.empty()) continue;
      double acc = init(i);
      for (EntryIndex e : entries) acc += contrib[e];
      sink(i, acc);
    }
  });
}

class StageClock {
 public:
  explicit StageClock(RunMetrics* metrics) : metrics_(metrics) {}
  void mark(const std::string& stage, std::size_t entries) {
    const auto now = std::chrono::steady_clock::now();
    if (metrics_ != nullptr) {
      metrics_->stages.push_back(
          {stage, std::chrono::duration<double>(now - last_).count(), entries});
    }
    last_ = now;
  }

 private:
  RunMetrics* metrics_;
  std::chrono::steady_clock::time_point last_ =
      std::chrono::steady_clock::now();
};

}  // namespace internal

// ---------------------------------------------------------------------------
// Basic
// ---------------------------------------------------------------------------

inline WeightMap basic_weights(const UserSetCollection& data,
                               RunMetrics* metrics = nullptr) {
  internal::StageClock clock(metrics);
  const ItemIndex index(data);
  std::vector<double> contrib(data.num_entries());
  parallel_for(0, data.num_users(), [&](std::size_t u) {
    const std::size_t d = data.degree(u);
    if (d == 0) return;
    const double share = 1.0 / std::sqrt(static_cast<double>(d));
    std::fill_n(contrib.begin() + data.row_begin(u), d, share);
  });
  WeightMap w(data.item_bound());
  auto values = w.raw_values();
  auto present = w.raw_present();
  internal::gather_by_item(
      index, contrib, [](std::size_t) { return 0.0; },
      [&](std::size_t i, double sum) {
        values[i] = sum;
        present[i] = 1;
      });
  clock.mark("basic_weights", data.num_entries());
  return w;
}

// ---------------------------------------------------------------------------
// UserWeights
// ---------------------------------------------------------------------------

inline constexpr int kUserWeightsMaxIterations = 64;
inline constexpr double kUserWeightsTolerance = 1e-12;

struct UserWeightsStats {
  int iterations = 0;
  bool hit_iteration_cap = false;
};

// Biased l2-bounded allocation for one user. out[k] receives the weight of
// items[k]. Biased items (b < 1) start at max(b_min, b)/sqrt(d); unbiased
// items share the remaining l2 budget, capped at b_max/sqrt(d); then items
// below 1/sqrt(d) are scaled up while budget remains and no item passes
// b_max/sqrt(d).
inline UserWeightsStats user_weights_into(std::span<const ItemId> items,
                                          const BiasMap& biases,
                                          std::span<double> out) {
  require(!items.empty(), "user_weights requires a non-empty set");
  require(out.size() == items.size(), "output span size mismatch");
  const double d = static_cast<double>(items.size());
  const double sqrt_d = std::sqrt(d);
  const double uniform = 1.0 / sqrt_d;
  const double cap = biases.b_max() / sqrt_d;

  double biased_sq = 0.0;
  std::size_t unbiased = 0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const double b = biases[items[k]];
    require(b > 0, "biases must be > 0");
    if (b < 1.0) {
      out[k] = std::max(biases.b_min(), b) / sqrt_d;
      biased_sq += out[k] * out[k];
    } else {
      out[k] = -1.0;  // marker
      ++unbiased;
    }
  }
  if (unbiased > 0) {
    const double fill = std::min(
        cap, std::sqrt(std::max(0.0, 1.0 - biased_sq) /
                       static_cast<double>(unbiased)));
    for (double& w : out) {
      if (w < 0) w = fill;
    }
  }

  UserWeightsStats stats;
  while (true) {
    double norm_sq = 0.0;
    double small_sq = 0.0;
    double small_max = 0.0;
    bool any_small = false;
    for (double w : out) {
      norm_sq += w * w;
      if (w < uniform) {
        any_small = true;
        small_sq += w * w;
        small_max = std::max(small_max, w);
      }
    }
    if (norm_sq >= 1.0 - kUserWeightsTolerance || !any_small) break;
    if (stats.iterations == kUserWeightsMaxIterations) {
      stats.hit_iteration_cap = true;
      break;
    }
    const double factor =
        std::min(cap / small_max, std::sqrt(1.0 + (1.0 - norm_sq) / small_sq));
    if (factor <= 1.0 + kUserWeightsTolerance) break;
    for (double& w : out) {
      if (w < uniform) w = std::min(cap, factor * w);
    }
    ++stats.iterations;
  }
  return stats;
}

inline std::vector<double> user_weights(std::span<const ItemId> items,
                                        const BiasMap& biases,
                                        UserWeightsStats* stats = nullptr) {
  std::vector<double> out(items.size());
  const UserWeightsStats s = user_weights_into(items, biases, out);
  if (stats != nullptr) *stats = s;
  return out;
}

// ---------------------------------------------------------------------------
// MAD
// ---------------------------------------------------------------------------

struct MadOptions {
  // Permit tau < 1 or d_max < 4, where the novel-item bound is not proved.
  bool unsafe_parameters = false;
};

// Intermediate vectors of one MAD evaluation, dense over the item id range
// (per-user for excess). Filled only when requested.
struct MadTrace {
  std::vector<double> w_init;
  std::vector<double> w_trunc;
  std::vector<double> w_reroute;
  std::vector<double> excess_ratio;
  std::vector<double> user_excess;
  std::vector<std::uint8_t> adaptive;
};

inline WeightMap mad_weights(const UserSetCollection& data, double tau,
                             const AdaptiveConfig& cfg, const BiasMap& biases,
                             const MadOptions& options = {},
                             MadTrace* trace = nullptr,
                             RunMetrics* metrics = nullptr) {
  require(std::isfinite(tau) && tau >= 0, "tau must be finite and >= 0");
  require(biases.b_min() == cfg.b_min,
          "bias clamp b_min must match the adaptive config");
  if (!options.unsafe_parameters) {
    require(tau >= 1, "tau < 1 is outside the proved sensitivity regime");
    require(cfg.d_max >= 4,
            "d_max < 4 is outside the proved sensitivity regime");
  }
  internal::StageClock clock(metrics);
  const std::size_t num_users = data.num_users();
  const std::size_t num_items = data.item_bound();
  const ItemIndex index(data);
  clock.mark("mad/index", data.num_entries());

  std::vector<std::uint8_t> adaptive(num_users, 0);
  std::vector<double> contrib(data.num_entries(), 0.0);

  // (1) l1-bounded initial weights from adaptive users.
  parallel_for(0, num_users, [&](std::size_t u) {
    const std::size_t d = data.degree(u);
    if (d == 0 || !cfg.is_adaptive(d)) return;
    adaptive[u] = 1;
    std::fill_n(contrib.begin() + data.row_begin(u), d,
                1.0 / static_cast<double>(d));
  });
  std::vector<double> w_init(num_items, 0.0);
  internal::gather_by_item(
      index, contrib, [](std::size_t) { return 0.0; },
      [&](std::size_t i, double sum) { w_init[i] = sum; });
  clock.mark("mad/init", data.num_entries());

  // (2) Excess ratio and truncation. r = 1 - tau/w keeps r monotone in w
  // under rounding.
  std::vector<double> ratio(num_items, 0.0);
  std::vector<double> w_trunc(num_items, 0.0);
  parallel_for(0, num_items, [&](std::size_t i) {
    const double w = w_init[i];
    ratio[i] = w > tau ? 1.0 - tau / w : 0.0;
    w_trunc[i] = std::min(w, tau);
  });

  // (3) Per-user excess, rerouted with discount alpha / d_max.
  std::vector<double> excess(num_users, 0.0);
  const double reroute_scale = cfg.alpha / cfg.d_max;
  parallel_for(0, num_users, [&](std::size_t u) {
    if (!adaptive[u]) return;
    const auto items = data.items_of(u);
    double sum = 0.0;
    for (ItemId id : items) sum += ratio[index_of(id)];
    excess[u] = sum / static_cast<double>(items.size());
    std::fill_n(contrib.begin() + data.row_begin(u), items.size(),
                reroute_scale * excess[u]);
  });
  std::vector<double> w_reroute(num_items, 0.0);
  internal::gather_by_item(
      index, contrib, [](std::size_t) { return 0.0; },
      [&](std::size_t i, double sum) { w_reroute[i] = sum; });
  clock.mark("mad/truncate_reroute", data.num_entries());

  // (4)-(5) w = w_trunc + w_reroute, plus each user's l2 allocation (minus the
  // initial 1/d for adaptive users).
  const bool uniform_users = biases.num_biased() == 0;
  std::vector<std::size_t> cap_hits(num_users, 0);
  parallel_for(0, num_users, [&](std::size_t u) {
    const std::size_t d = data.degree(u);
    if (d == 0) return;
    const std::span<double> out(contrib.data() + data.row_begin(u), d);
    if (uniform_users) {
      std::fill(out.begin(), out.end(),
                1.0 / std::sqrt(static_cast<double>(d)));
    } else {
      cap_hits[u] = user_weights_into(data.items_of(u), biases, out)
                        .hit_iteration_cap;
    }
    if (adaptive[u]) {
      const double initial = 1.0 / static_cast<double>(d);
      for (double& c : out) c -= initial;
    }
  });
  WeightMap w(num_items);
  auto values = w.raw_values();
  auto present = w.raw_present();
  internal::gather_by_item(
      index, contrib,
      [&](std::size_t i) { return w_trunc[i] + w_reroute[i]; },
      [&](std::size_t i, double sum) {
        values[i] = sum;
        present[i] = 1;
      });
  clock.mark("mad/user_weights", data.num_entries());

  if (metrics != nullptr) {
    for (std::size_t h : cap_hits) metrics->user_weight_loop_cap_hits += h;
  }
  if (trace != nullptr) {
    trace->w_init = std::move(w_init);
    trace->w_trunc = std::move(w_trunc);
    trace->w_reroute = std::move(w_reroute);
    trace->excess_ratio = std::move(ratio);
    trace->user_excess = std::move(excess);
    trace->adaptive = std::move(adaptive);
  }
  return w;
}

// Unbiased MAD: all biases 1 and clamps b_min = b_max = 1.
inline WeightMap mad_weights(const UserSetCollection& data, double tau,
                             double d_max, const MadOptions& options = {}) {
  return mad_weights(data, tau, AdaptiveConfig(d_max, 1.0), BiasMap(1.0, 1.0),
                     options);
}

}  // namespace dp_partition

#endif  // DP_PARTITION_WEIGHTERS_HPP_
