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

// Domain types shared by every stage of partition selection: item ids, the
// per-user set collection (CSR layout), privacy budgets, sparse weight and
// bias maps, and the result of a selection run.

#ifndef DP_PARTITION_CORE_HPP_
#define DP_PARTITION_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dp_partition {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on a public entry point was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Literal messages take the const char* overload so that checks on hot paths
// do not build a std::string when they pass.
inline void require(bool condition, const char* message) {
  if (!condition) throw InvalidArgument(message);
}
inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

// Dense interned item id. Ids are assigned in lexicographic order of the
// source strings at ingestion time, so they do not depend on input order.
enum class ItemId : std::uint32_t {};

constexpr std::size_t index_of(ItemId id) {
  return static_cast<std::size_t>(id);
}
constexpr ItemId item_id(std::size_t index) {
  return static_cast<ItemId>(static_cast<std::uint32_t>(index));
}

inline constexpr std::size_t kMaxItems =
    std::numeric_limits<std::uint32_t>::max();

// Id -> source string side table.
class ItemDictionary {
 public:
  ItemDictionary() = default;
  explicit ItemDictionary(std::vector<std::string> names)
      : names_(std::move(names)) {}

  const std::string& name(ItemId id) const { return names_.at(index_of(id)); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// UserSetCollection
// ---------------------------------------------------------------------------

// The input {(u, S_u)}: per-user sets of items in compressed-row layout. Each
// row is sorted and duplicate-free. Users are addressed by their position;
// optional labels map positions back to source user ids.
class UserSetCollection {
 public:
  UserSetCollection() : offsets_{0} {}

  // Rows may be unsorted and contain duplicates; both are normalized.
  // item_bound is an exclusive bound on item ids (0 derives it from data).
  static UserSetCollection from_sets(std::vector<std::vector<ItemId>> sets,
                                     std::size_t item_bound = 0) {
    UserSetCollection out;
    std::size_t total = 0;
    for (auto& s : sets) {
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
      total += s.size();
    }
    out.offsets_.reserve(sets.size() + 1);
    out.items_.reserve(total);
    std::size_t bound = 0;
    for (const auto& s : sets) {
      for (ItemId id : s) {
        out.items_.push_back(id);
        bound = std::max(bound, index_of(id) + 1);
      }
      out.offsets_.push_back(out.items_.size());
    }
    require(item_bound == 0 || item_bound >= bound,
            "item_bound smaller than the largest item id");
    out.item_bound_ = item_bound == 0 ? bound : item_bound;
    return out;
  }

  // Adopts an already-normalized CSR layout (rows sorted and unique).
  static UserSetCollection from_csr(std::vector<std::size_t> offsets,
                                    std::vector<ItemId> items,
                                    std::size_t item_bound) {
    require(!offsets.empty() && offsets.front() == 0 &&
                offsets.back() == items.size(),
            "malformed CSR offsets");
    for (std::size_t u = 0; u + 1 < offsets.size(); ++u) {
      require(offsets[u] <= offsets[u + 1], "CSR offsets must be monotone");
      for (std::size_t e = offsets[u]; e < offsets[u + 1]; ++e) {
        require(index_of(items[e]) < item_bound, "item id out of range");
        require(e == offsets[u] || items[e - 1] < items[e],
                "CSR rows must be sorted and duplicate-free");
      }
    }
    UserSetCollection out;
    out.offsets_ = std::move(offsets);
    out.items_ = std::move(items);
    out.item_bound_ = item_bound;
    return out;
  }

  std::size_t num_users() const { return offsets_.size() - 1; }
  std::size_t num_entries() const { return items_.size(); }
  std::size_t item_bound() const { return item_bound_; }
  bool empty() const { return items_.empty(); }

  std::size_t degree(std::size_t user) const {
    return offsets_[user + 1] - offsets_[user];
  }
  std::span<const ItemId> items_of(std::size_t user) const {
    return {items_.data() + offsets_[user], degree(user)};
  }
  std::size_t row_begin(std::size_t user) const { return offsets_[user]; }

  const std::vector<std::size_t>& offsets() const { return offsets_; }
  std::span<const ItemId> entries() const { return items_; }

  const std::shared_ptr<const ItemDictionary>& dictionary() const {
    return dictionary_;
  }
  void set_dictionary(std::shared_ptr<const ItemDictionary> dict) {
    require(dict == nullptr || dict->size() >= item_bound_,
            "dictionary does not cover the item id range");
    dictionary_ = std::move(dict);
  }
  const std::vector<std::string>& user_labels() const { return user_labels_; }
  void set_user_labels(std::vector<std::string> labels) {
    require(labels.empty() || labels.size() == num_users(),
            "one label per user required");
    user_labels_ = std::move(labels);
  }

  std::size_t max_degree() const {
    std::size_t d = 0;
    for (std::size_t u = 0; u < num_users(); ++u) d = std::max(d, degree(u));
    return d;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<ItemId> items_;
  std::size_t item_bound_ = 0;
  std::shared_ptr<const ItemDictionary> dictionary_;
  std::vector<std::string> user_labels_;
};

// Sorted list of the items held by at least one user.
inline std::vector<ItemId> observed_union(const UserSetCollection& data) {
  std::vector<std::uint8_t> seen(data.item_bound(), 0);
  for (ItemId id : data.entries()) seen[index_of(id)] = 1;
  std::vector<ItemId> out;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) out.push_back(item_id(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Privacy parameters
// ---------------------------------------------------------------------------

struct PrivacyBudget {
  double epsilon = 1.0;
  double delta = 1e-5;

  PrivacyBudget() = default;
  PrivacyBudget(double eps, double del) : epsilon(eps), delta(del) {
    require(std::isfinite(epsilon) && epsilon > 0, "epsilon must be > 0");
    require(std::isfinite(delta) && delta > 0 && delta <= 1,
            "delta must be in (0, 1]");
  }
};

// Reroute configuration of the adaptive weighter.
struct AdaptiveConfig {
  double d_max = 50;
  double b_min = 1;
  double alpha = 0;
  std::size_t min_adaptive_degree = 1;

  AdaptiveConfig() : AdaptiveConfig(50, 1) {}
  AdaptiveConfig(double max_degree, double min_bias)
      : d_max(max_degree), b_min(min_bias) {
    require(std::isfinite(d_max) && d_max > 1, "d_max must be > 1");
    require(b_min >= 0.5 && b_min <= 1, "b_min must be in [0.5, 1]");
    alpha = reroute_discount(b_min, d_max);
    min_adaptive_degree =
        static_cast<std::size_t>(std::ceil(1.0 / (b_min * b_min)));
  }

  static double reroute_discount(double min_bias, double max_degree) {
    return min_bias - 1.0 / (2.0 * std::sqrt(max_degree));
  }

  bool is_adaptive(std::size_t degree) const {
    return degree >= min_adaptive_degree &&
           static_cast<double>(degree) <= d_max;
  }
};

// ---------------------------------------------------------------------------
// WeightMap
// ---------------------------------------------------------------------------

// Sparse item -> weight map stored densely over the interned id range; a
// presence flag distinguishes "absent" (weight 0, not a key) from a stored 0.
class WeightMap {
 public:
  WeightMap() = default;
  explicit WeightMap(std::size_t item_bound)
      : values_(item_bound, 0.0), present_(item_bound, 0) {}

  std::size_t item_bound() const { return values_.size(); }

  bool contains(ItemId id) const {
    return index_of(id) < present_.size() && present_[index_of(id)] != 0;
  }
  double operator[](ItemId id) const {
    return contains(id) ? values_[index_of(id)] : 0.0;
  }
  void set(ItemId id, double value) {
    require(std::isfinite(value), "weights must be finite");
    const std::size_t i = index_of(id);
    if (i >= values_.size()) throw InvalidArgument("item id out of range");
    values_[i] = value;
    present_[i] = 1;
  }
  void erase(ItemId id) {
    if (contains(id)) {
      values_[index_of(id)] = 0.0;
      present_[index_of(id)] = 0;
    }
  }

  std::size_t size() const {
    return static_cast<std::size_t>(
        std::count(present_.begin(), present_.end(), std::uint8_t{1}));
  }
  std::vector<ItemId> keys() const {
    std::vector<ItemId> out;
    for (std::size_t i = 0; i < present_.size(); ++i) {
      if (present_[i]) out.push_back(item_id(i));
    }
    return out;
  }

  // Raw slots for stage kernels that write disjoint indices in parallel.
  std::span<double> raw_values() { return values_; }
  std::span<const double> raw_values() const { return values_; }
  std::span<std::uint8_t> raw_present() { return present_; }
  std::span<const std::uint8_t> raw_present() const { return present_; }

  friend bool operator==(const WeightMap&, const WeightMap&) = default;

 private:
  std::vector<double> values_;
  std::vector<std::uint8_t> present_;
};

// ---------------------------------------------------------------------------
// BiasMap
// ---------------------------------------------------------------------------

// Per-item down-weighting in (0, 1]; absent items are unbiased (bias 1).
class BiasMap {
 public:
  BiasMap() = default;
  BiasMap(double b_min, double b_max) : b_min_(b_min), b_max_(b_max) {
    require(b_min_ >= 0.5 && b_min_ <= 1, "b_min must be in [0.5, 1]");
    require(b_max_ >= 1, "b_max must be >= 1");
  }

  double b_min() const { return b_min_; }
  double b_max() const { return b_max_; }

  double operator[](ItemId id) const {
    const std::size_t i = index_of(id);
    return i < values_.size() ? values_[i] : 1.0;
  }
  void set(ItemId id, double bias) {
    require(std::isfinite(bias) && bias > 0, "bias must be > 0");
    require(bias <= 1, "stored biases must be <= 1");
    const std::size_t i = index_of(id);
    if (bias == 1.0 && i >= values_.size()) return;
    if (i >= values_.size()) values_.resize(i + 1, 1.0);
    if (values_[i] < 1.0 && bias == 1.0) --biased_;
    if (values_[i] == 1.0 && bias < 1.0) ++biased_;
    values_[i] = bias;
  }

  // True when every item is unbiased and the clamps are both 1, in which
  // case user weights reduce to 1/sqrt(d).
  bool is_trivial() const {
    return biased_ == 0 && b_min_ == 1.0 && b_max_ == 1.0;
  }
  std::size_t num_biased() const { return biased_; }

 private:
  double b_min_ = 1.0;
  double b_max_ = 1.0;
  std::vector<double> values_;
  std::size_t biased_ = 0;
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct StageTiming {
  std::string stage;
  double seconds = 0;
  std::size_t entries = 0;
};

struct RoundSummary {
  double epsilon = 0;
  double delta = 0;
  double sigma = 0;
  double rho = 0;
  double tau = 0;
  std::size_t rho_argmax_t = 0;
  std::size_t input_entries = 0;
  std::size_t selected = 0;
};

struct RunMetrics {
  std::size_t output_size = 0;
  std::size_t entries_processed = 0;
  double total_epsilon = 0;
  double total_delta = 0;
  std::vector<RoundSummary> rounds;
  std::vector<StageTiming> stages;
  std::size_t user_weight_loop_cap_hits = 0;
};

// Output of a selection run. The noisy weights are an internal product used
// to drive later rounds; releasing them is not private because their support
// is the true union.
class SelectionResult {
 public:
  SelectionResult() = default;
  SelectionResult(std::vector<ItemId> selected, WeightMap noisy_weights,
                  RunMetrics metrics)
      : selected_(std::move(selected)),
        noisy_weights_(std::move(noisy_weights)),
        metrics_(std::move(metrics)) {}

  const std::vector<ItemId>& selected() const { return selected_; }
  const RunMetrics& metrics() const { return metrics_; }
  RunMetrics& mutable_metrics() { return metrics_; }

  // NOT differentially private. Only for chaining rounds and debugging.
  const WeightMap& noisy_weights_nonprivate() const { return noisy_weights_; }

 private:
  std::vector<ItemId> selected_;
  WeightMap noisy_weights_;
  RunMetrics metrics_;
};

struct SensitivityReport {
  double l2_delta = 0;
  // Keyed by t = number of novel items; holds max weight over novel items.
  std::map<std::size_t, double> novel_linf;
  std::size_t t = 0;
};

}  // namespace dp_partition

#endif  // DP_PARTITION_CORE_HPP_
