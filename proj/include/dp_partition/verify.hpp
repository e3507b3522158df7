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

// Executable checks of the privacy and utility guarantees:
//
//   measure_sensitivity / run_sensitivity_sweep
//       brute-force l2 and novel-l_inf sensitivity over neighbor pairs, plus
//       exact monotonicity of the MAD intermediate vectors;
//   dominance_harness
//       per-item selection frequencies of MAD versus Basic;
//   calibration_monte_carlo
//       empirical probability that any of t novel items crosses rho.

#ifndef DP_PARTITION_VERIFY_HPP_
#define DP_PARTITION_VERIFY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "dp_partition/calibration.hpp"
#include "dp_partition/core.hpp"
#include "dp_partition/parallel.hpp"
#include "dp_partition/pipeline.hpp"
#include "dp_partition/random.hpp"
#include "dp_partition/weighters.hpp"

namespace dp_partition {

// ---------------------------------------------------------------------------
// Sensitivity
// ---------------------------------------------------------------------------

// base and base + one new user (appended last).
struct NeighborPair {
  UserSetCollection base;
  UserSetCollection extended;
  std::vector<ItemId> novel;
};

inline NeighborPair make_neighbor_pair(const UserSetCollection& base,
                                       std::vector<ItemId> new_set) {
  std::sort(new_set.begin(), new_set.end());
  new_set.erase(std::unique(new_set.begin(), new_set.end()), new_set.end());
  require(!new_set.empty(), "the new user's set must be non-empty");
  std::size_t bound = base.item_bound();
  for (ItemId id : new_set) bound = std::max(bound, index_of(id) + 1);

  std::vector<std::size_t> offsets = base.offsets();
  std::vector<ItemId> items(base.entries().begin(), base.entries().end());
  items.insert(items.end(), new_set.begin(), new_set.end());
  offsets.push_back(items.size());

  NeighborPair pair;
  pair.base = UserSetCollection::from_csr(base.offsets(),
                                          {base.entries().begin(),
                                           base.entries().end()},
                                          bound);
  pair.extended =
      UserSetCollection::from_csr(std::move(offsets), std::move(items), bound);
  std::vector<std::uint8_t> seen(bound, 0);
  for (ItemId id : base.entries()) seen[index_of(id)] = 1;
  for (ItemId id : new_set) {
    if (!seen[index_of(id)]) pair.novel.push_back(id);
  }
  return pair;
}

inline void validate_neighbor_pair(const NeighborPair& pair) {
  const auto& b = pair.base;
  const auto& e = pair.extended;
  require(e.num_users() == b.num_users() + 1,
          "extended dataset must have exactly one more user");
  for (std::size_t u = 0; u < b.num_users(); ++u) {
    const auto x = b.items_of(u);
    const auto y = e.items_of(u);
    require(std::equal(x.begin(), x.end(), y.begin(), y.end()),
            "shared users must hold identical sets");
  }
  std::vector<std::uint8_t> seen(e.item_bound(), 0);
  for (ItemId id : b.entries()) seen[index_of(id)] = 1;
  std::vector<ItemId> novel;
  for (ItemId id : e.items_of(b.num_users())) {
    if (!seen[index_of(id)]) novel.push_back(id);
  }
  require(novel == pair.novel, "novel items do not match the new user's set");
}

using WeighFunction = std::function<WeightMap(const UserSetCollection&)>;

inline SensitivityReport sensitivity_of(const WeightMap& w,
                                        const WeightMap& w_ext,
                                        const std::vector<ItemId>& novel) {
  SensitivityReport report;
  double sum_sq = 0.0;
  for (ItemId id : w_ext.keys()) {
    const double diff = w_ext[id] - w[id];
    sum_sq += diff * diff;
  }
  report.l2_delta = std::sqrt(sum_sq);
  report.t = novel.size();
  if (!novel.empty()) {
    double worst = 0.0;
    for (ItemId id : novel) worst = std::max(worst, w_ext[id]);
    report.novel_linf[novel.size()] = worst;
  }
  return report;
}

inline SensitivityReport measure_sensitivity(const WeighFunction& weigh,
                                             const NeighborPair& pair) {
  validate_neighbor_pair(pair);
  return sensitivity_of(weigh(pair.base), weigh(pair.extended), pair.novel);
}

// Grid for the exhaustive small-instance sweep. Base datasets are all
// multisets of at most max_base_users non-empty subsets of base_items items;
// new users are every subset of the base items joined with 0..max_novel
// novel items.
struct SweepGrid {
  std::size_t base_items = 4;
  std::size_t max_base_users = 4;
  std::size_t max_novel = 6;
  std::vector<double> b_min_values{0.5, 0.75, 1.0};
  std::vector<double> b_max_values{1.0, 2.0};
  std::vector<double> tau_values{1.0, 1.5};
  std::vector<double> d_max_values{4.0, 9.0};
  // Per-item bias patterns: item k gets bias_grid[(k + shift) % size]; shift
  // -1 means all items unbiased.
  std::vector<double> bias_grid{1.0, 0.7, 0.3};
  std::vector<int> bias_shifts{-1, 0, 1, 2};
};

struct SweepReport {
  std::size_t configurations = 0;
  std::size_t base_datasets = 0;
  std::size_t pairs = 0;
  double max_l2 = 0;
  // max over pairs of novel_linf / (b_max / sqrt(t)); <= 1 when the bound holds.
  double max_linf_ratio = 0;
  std::size_t l2_violations = 0;
  std::size_t linf_violations = 0;
  std::size_t monotonicity_violations = 0;
  std::string first_violation;

  bool ok() const {
    return l2_violations == 0 && linf_violations == 0 &&
           monotonicity_violations == 0;
  }
};

inline constexpr double kSensitivitySlack = 1e-9;

namespace internal {

// All multisets of size <= k over {0..choices-1}, as non-decreasing vectors.
inline void enumerate_multisets(std::size_t choices, std::size_t k,
                                std::vector<std::vector<std::size_t>>& out) {
  std::vector<std::size_t> current;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    out.push_back(current);
    if (current.size() == k) return;
    for (std::size_t c = start; c < choices; ++c) {
      current.push_back(c);
      rec(c);
      current.pop_back();
    }
  };
  rec(0);
}

inline std::vector<ItemId> subset_items(std::size_t mask) {
  std::vector<ItemId> items;
  for (std::size_t k = 0; mask != 0; ++k, mask >>= 1) {
    if (mask & 1u) items.push_back(item_id(k));
  }
  return items;
}

}  // namespace internal

// Exhaustive sensitivity sweep of MAD over the grid. For every base dataset
// and new user: l2 <= 1, novel l_inf <= b_max/sqrt(t), and
// w_init, w_trunc, w_reroute never decrease.
inline SweepReport run_sensitivity_sweep(const SweepGrid& grid) {
  require(grid.base_items >= 1 && grid.base_items < 16, "base_items in [1,15]");
  const std::size_t universe = grid.base_items + grid.max_novel;

  // Base datasets: multisets of non-empty subsets (bit masks).
  std::vector<std::vector<std::size_t>> multisets;
  internal::enumerate_multisets((std::size_t{1} << grid.base_items) - 1,
                                grid.max_base_users, multisets);
  std::vector<UserSetCollection> bases;
  bases.reserve(multisets.size());
  for (const auto& ms : multisets) {
    std::vector<std::vector<ItemId>> sets;
    for (std::size_t c : ms) sets.push_back(internal::subset_items(c + 1));
    bases.push_back(UserSetCollection::from_sets(std::move(sets), universe));
  }
  // New users: any subset of base items plus the first `novel` novel items.
  std::vector<std::vector<ItemId>> new_sets;
  for (std::size_t mask = 0; mask < (std::size_t{1} << grid.base_items);
       ++mask) {
    for (std::size_t novel = 0; novel <= grid.max_novel; ++novel) {
      if (mask == 0 && novel == 0) continue;
      auto items = internal::subset_items(mask);
      for (std::size_t k = 0; k < novel; ++k) {
        items.push_back(item_id(grid.base_items + k));
      }
      new_sets.push_back(std::move(items));
    }
  }

  struct Config {
    double b_min, b_max, tau, d_max;
    int shift;
  };
  std::vector<Config> configs;
  for (double b_min : grid.b_min_values)
    for (double b_max : grid.b_max_values)
      for (double tau : grid.tau_values)
        for (double d_max : grid.d_max_values)
          for (int shift : grid.bias_shifts)
            configs.push_back({b_min, b_max, tau, d_max, shift});

  SweepReport report;
  report.configurations = configs.size();
  report.base_datasets = bases.size();

  std::mutex mu;
  parallel_for(
      0, configs.size() * bases.size(),
      [&](std::size_t job) {
        const Config& cfg = configs[job / bases.size()];
        const UserSetCollection& base = bases[job % bases.size()];
        const AdaptiveConfig adaptive(cfg.d_max, cfg.b_min);
        BiasMap biases(cfg.b_min, cfg.b_max);
        if (cfg.shift >= 0) {
          for (std::size_t k = 0; k < universe; ++k) {
            biases.set(item_id(k),
                       grid.bias_grid[(k + static_cast<std::size_t>(cfg.shift)) %
                                      grid.bias_grid.size()]);
          }
        }
        MadTrace base_trace;
        const WeightMap w =
            mad_weights(base, cfg.tau, adaptive, biases, {}, &base_trace);

        // The pair is assembled in place rather than through
        // make_neighbor_pair: the base never changes inside this loop.
        std::vector<std::uint8_t> in_base(universe, 0);
        for (ItemId id : base.entries()) in_base[index_of(id)] = 1;
        SweepReport local;
        std::vector<ItemId> novel;
        for (const auto& new_set : new_sets) {
          std::vector<std::size_t> offsets = base.offsets();
          std::vector<ItemId> items(base.entries().begin(),
                                    base.entries().end());
          items.insert(items.end(), new_set.begin(), new_set.end());
          offsets.push_back(items.size());
          const UserSetCollection extended = UserSetCollection::from_csr(
              std::move(offsets), std::move(items), universe);
          novel.clear();
          for (ItemId id : new_set) {
            if (!in_base[index_of(id)]) novel.push_back(id);
          }
          MadTrace ext_trace;
          const WeightMap w_ext = mad_weights(extended, cfg.tau, adaptive,
                                              biases, {}, &ext_trace);
          const SensitivityReport s = sensitivity_of(w, w_ext, novel);
          ++local.pairs;
          local.max_l2 = std::max(local.max_l2, s.l2_delta);
          std::string violation;
          if (s.l2_delta > 1.0 + kSensitivitySlack) {
            ++local.l2_violations;
            violation = "l2=" + std::to_string(s.l2_delta);
          }
          for (const auto& [t, linf] : s.novel_linf) {
            const double bound = cfg.b_max / std::sqrt(static_cast<double>(t));
            local.max_linf_ratio = std::max(local.max_linf_ratio, linf / bound);
            if (linf > bound + kSensitivitySlack) {
              ++local.linf_violations;
              violation = "linf=" + std::to_string(linf) + " t=" +
                          std::to_string(t);
            }
          }
          for (std::size_t i = 0; i < universe; ++i) {
            if (ext_trace.w_init[i] < base_trace.w_init[i] ||
                ext_trace.w_trunc[i] < base_trace.w_trunc[i] ||
                ext_trace.w_reroute[i] < base_trace.w_reroute[i]) {
              ++local.monotonicity_violations;
              violation = "monotonicity at item " + std::to_string(i);
            }
          }
          if (!violation.empty() && local.first_violation.empty()) {
            local.first_violation =
                violation + " (b_min=" + std::to_string(cfg.b_min) +
                " b_max=" + std::to_string(cfg.b_max) +
                " tau=" + std::to_string(cfg.tau) +
                " d_max=" + std::to_string(cfg.d_max) +
                " shift=" + std::to_string(cfg.shift) + ")";
          }
        }
        std::lock_guard<std::mutex> lock(mu);
        report.pairs += local.pairs;
        report.max_l2 = std::max(report.max_l2, local.max_l2);
        report.max_linf_ratio =
            std::max(report.max_linf_ratio, local.max_linf_ratio);
        report.l2_violations += local.l2_violations;
        report.linf_violations += local.linf_violations;
        report.monotonicity_violations += local.monotonicity_violations;
        if (report.first_violation.empty()) {
          report.first_violation = local.first_violation;
        }
      },
      16);
  return report;
}

// Basic over the same neighbor pairs: l2 is exactly 1 (to rounding) and the
// novel l_inf equals 1/sqrt(d) of the new user.
struct BasicSweepReport {
  std::size_t pairs = 0;
  double max_l2_error = 0;
  double max_linf_error = 0;
};

inline BasicSweepReport run_basic_sensitivity_sweep(const SweepGrid& grid) {
  SweepGrid g = grid;
  std::vector<std::vector<std::size_t>> multisets;
  internal::enumerate_multisets((std::size_t{1} << g.base_items) - 1,
                                g.max_base_users, multisets);
  const std::size_t universe = g.base_items + g.max_novel;
  BasicSweepReport report;
  for (const auto& ms : multisets) {
    std::vector<std::vector<ItemId>> sets;
    for (std::size_t c : ms) sets.push_back(internal::subset_items(c + 1));
    const auto base = UserSetCollection::from_sets(std::move(sets), universe);
    const WeightMap w = basic_weights(base);
    for (std::size_t mask = 0; mask < (std::size_t{1} << g.base_items);
         ++mask) {
      for (std::size_t novel = 0; novel <= g.max_novel; ++novel) {
        if (mask == 0 && novel == 0) continue;
        auto items = internal::subset_items(mask);
        for (std::size_t k = 0; k < novel; ++k) {
          items.push_back(item_id(g.base_items + k));
        }
        const double d = static_cast<double>(items.size());
        const NeighborPair pair = make_neighbor_pair(base, std::move(items));
        const SensitivityReport s =
            sensitivity_of(w, basic_weights(pair.extended), pair.novel);
        ++report.pairs;
        report.max_l2_error =
            std::max(report.max_l2_error, std::fabs(s.l2_delta - 1.0));
        for (const auto& [t, linf] : s.novel_linf) {
          report.max_linf_error = std::max(
              report.max_linf_error, std::fabs(linf - 1.0 / std::sqrt(d)));
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Stochastic dominance
// ---------------------------------------------------------------------------

struct DominanceParams {
  PrivacyBudget budget{1.0, 1e-5};
  std::size_t delta0 = 100;
  double beta = 2.0;
  double d_max = 50;
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
  MadOptions mad_options;
};

struct DominanceItem {
  std::size_t instance = 0;
  ItemId item{};
  double weight_basic = 0;
  double weight_mad = 0;
  double freq_basic = 0;
  double freq_mad = 0;
  bool passed = true;
};

struct DominanceReport {
  double sigma = 0;
  double rho = 0;
  double tau = 0;
  double phi_beta = 0;
  std::size_t items_checked = 0;
  std::size_t statistical_failures = 0;
  std::size_t weight_failures = 0;  // w_mad < min(w_basic, tau) - 1e-12
  std::vector<DominanceItem> failures;
  // Per instance: mean selected count under Basic and MAD.
  std::vector<std::pair<double, double>> mean_output;

  bool ok() const { return statistical_failures == 0 && weight_failures == 0; }
};

inline constexpr double kDominanceSlackStderr = 3.0;

// Estimates per-item selection frequencies of Basic and unbiased MAD over
// `trials` noise draws. Both algorithms see the same draw in each trial.
// Each item must satisfy freq_mad >= freq_basic - 3 se or
// freq_mad >= Phi(beta) - 3 se.
inline DominanceReport dominance_harness(
    const std::vector<UserSetCollection>& instances,
    const DominanceParams& params) {
  require(params.trials >= 1, "trials must be >= 1");
  const CalibrationParams calib =
      calibrate(params.budget, params.delta0,
                SensitivityProfile::inverse_sqrt(1.0), params.beta);
  DominanceReport report;
  report.sigma = calib.sigma;
  report.rho = calib.rho;
  report.tau = calib.tau;
  report.phi_beta = std_normal_cdf(params.beta);
  const double trials = static_cast<double>(params.trials);
  const RunSeed seed(params.seed);

  for (std::size_t k = 0; k < instances.size(); ++k) {
    const UserSetCollection& data = instances[k];
    require(data.max_degree() <= params.delta0,
            "dominance instances must be pre-capped");
    const WeightMap wb = basic_weights(data);
    const WeightMap wm =
        mad_weights(data, calib.tau, AdaptiveConfig(params.d_max, 1.0),
                    BiasMap(1.0, 1.0), params.mad_options);
    const std::vector<ItemId> items = wb.keys();

    std::vector<std::size_t> hits_b(items.size(), 0);
    std::vector<std::size_t> hits_m(items.size(), 0);
    std::mutex mu;
    parallel_blocks(0, params.trials, [&](std::size_t lo, std::size_t hi) {
      std::vector<std::size_t> local_b(items.size(), 0);
      std::vector<std::size_t> local_m(items.size(), 0);
      for (std::size_t trial = lo; trial < hi; ++trial) {
        const std::uint64_t stream =
            seed.stream(Substream::kTrial, (k << 32) | trial);
        for (std::size_t j = 0; j < items.size(); ++j) {
          const double z =
              calib.sigma * keyed_gaussian(stream, index_of(items[j]));
          local_b[j] += wb[items[j]] + z >= calib.rho;
          local_m[j] += wm[items[j]] + z >= calib.rho;
        }
      }
      std::lock_guard<std::mutex> lock(mu);
      for (std::size_t j = 0; j < items.size(); ++j) {
        hits_b[j] += local_b[j];
        hits_m[j] += local_m[j];
      }
    }, 256);

    double total_b = 0.0;
    double total_m = 0.0;
    for (std::size_t j = 0; j < items.size(); ++j) {
      DominanceItem it;
      it.instance = k;
      it.item = items[j];
      it.weight_basic = wb[items[j]];
      it.weight_mad = wm[items[j]];
      it.freq_basic = static_cast<double>(hits_b[j]) / trials;
      it.freq_mad = static_cast<double>(hits_m[j]) / trials;
      total_b += it.freq_basic;
      total_m += it.freq_mad;
      const double se_basic =
          std::sqrt(it.freq_basic * (1.0 - it.freq_basic) / trials);
      const double se_phi =
          std::sqrt(report.phi_beta * (1.0 - report.phi_beta) / trials);
      const bool statistical =
          it.freq_mad >= it.freq_basic - kDominanceSlackStderr * se_basic ||
          it.freq_mad >= report.phi_beta - kDominanceSlackStderr * se_phi;
      const bool weights =
          it.weight_mad >= std::min(it.weight_basic, calib.tau) - 1e-12;
      ++report.items_checked;
      if (!statistical) ++report.statistical_failures;
      if (!weights) ++report.weight_failures;
      if (!statistical || !weights) {
        it.passed = false;
        if (report.failures.size() < 32) report.failures.push_back(it);
      }
    }
    report.mean_output.emplace_back(total_b, total_m);
  }
  return report;
}

// Random small instances for the dominance harness: a few popular items that
// cross tau plus a long tail, users of degree 1..max_degree.
inline std::vector<UserSetCollection> random_small_instances(
    std::size_t count, std::uint64_t seed) {
  std::vector<UserSetCollection> out;
  const RunSeed run_seed(seed);
  for (std::size_t k = 0; k < count; ++k) {
    CounterEngine engine(run_seed.stream(Substream::kSynthetic, k));
    const std::size_t users = 20 + bounded(engine(), 400);
    const std::size_t items = 5 + bounded(engine(), 80);
    const std::size_t max_degree = 1 + bounded(engine(), 8);
    const double exponent = 0.5 + unit_open(engine()) * 1.5;
    std::vector<std::vector<ItemId>> sets(users);
    for (auto& s : sets) {
      const std::size_t d = 1 + bounded(engine(), max_degree);
      for (std::size_t j = 0; j < d; ++j) {
        // Zipf-like popularity via inverse power of a uniform.
        const double u = unit_open(engine());
        const std::size_t rank = std::min<std::size_t>(
            items - 1,
            static_cast<std::size_t>(std::pow(u, -1.0 / exponent)) - 1);
        s.push_back(item_id(rank));
      }
    }
    out.push_back(UserSetCollection::from_sets(std::move(sets), items));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration Monte Carlo
// ---------------------------------------------------------------------------

struct CalibrationCheck {
  std::size_t t = 0;
  double cutoff = 0;  // rho - h(t)
  double probability = 0;
  double stderr_ = 0;
  double bound = 0;  // delta / 2
  bool passed = false;
};

struct CalibrationMcReport {
  std::vector<CalibrationCheck> checks;
  bool ok() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const CalibrationCheck& c) { return c.passed; });
  }
};

// For each t: empirical Pr[max of t N(0, sigma^2) draws >= rho - h(t)]
// against delta/2 + 3 standard errors. Draws come from std::normal_distribution
// over mt19937_64, independent of this library's quantile code.
inline CalibrationMcReport calibration_monte_carlo(
    double sigma, double rho, double delta, const SensitivityProfile& h,
    const std::vector<std::size_t>& t_grid, std::size_t samples,
    std::uint64_t seed) {
  require(samples >= 1, "samples must be >= 1");
  CalibrationMcReport report;
  for (std::size_t t : t_grid) {
    require(t >= 1, "t must be >= 1");
    CalibrationCheck check;
    check.t = t;
    check.cutoff = rho - h(t);
    check.bound = delta / 2.0;
    std::size_t exceed = 0;
    std::mutex mu;
    const std::size_t chunks = 64;
    parallel_for(0, chunks, [&](std::size_t c) {
      std::mt19937_64 gen(splitmix64(seed ^ (t << 20) ^ c));
      std::normal_distribution<double> normal(0.0, sigma);
      const std::size_t lo = samples * c / chunks;
      const std::size_t hi = samples * (c + 1) / chunks;
      std::size_t local = 0;
      for (std::size_t s = lo; s < hi; ++s) {
        bool any = false;
        for (std::size_t j = 0; j < t; ++j) any |= normal(gen) >= check.cutoff;
        local += any;
      }
      std::lock_guard<std::mutex> lock(mu);
      exceed += local;
    }, 1);
    const double n = static_cast<double>(samples);
    check.probability = static_cast<double>(exceed) / n;
    check.stderr_ = std::sqrt(check.bound * (1.0 - check.bound) / n);
    check.passed = check.probability <= check.bound + 3.0 * check.stderr_;
    report.checks.push_back(check);
  }
  return report;
}

}  // namespace dp_partition

#endif  // DP_PARTITION_VERIFY_HPP_
