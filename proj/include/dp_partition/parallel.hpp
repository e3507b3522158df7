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

// Single-machine data-parallel engine. Every stage is a map over users or
// items writing disjoint slots, or a keyed gather over the item -> entry
// index. Gathers visit contributions in ascending entry order, so results are
// bit-identical for any worker count.

#ifndef DP_PARTITION_PARALLEL_HPP_
#define DP_PARTITION_PARALLEL_HPP_

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dp_partition/core.hpp"

namespace dp_partition {

inline constexpr const char* kWorkersEnvVar = "DP_PARTITION_WORKERS";

namespace internal {
inline std::atomic<std::size_t>& worker_override() {
  static std::atomic<std::size_t> value{0};
  return value;
}
}  // namespace internal

// Number of workers: explicit override, then $DP_PARTITION_WORKERS, then the
// hardware concurrency. The environment is read once per process.
inline std::size_t worker_count() {
  if (std::size_t w = internal::worker_override().load(); w > 0) return w;
  static const std::size_t from_environment = [] {
    if (const char* env = std::getenv(kWorkersEnvVar)) {
      const long parsed = std::strtol(env, nullptr, 10);
      if (parsed > 0) return static_cast<std::size_t>(parsed);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
  }();
  return from_environment;
}

// Overrides the worker count for the current process; 0 restores defaults.
inline void set_worker_count(std::size_t workers) {
  internal::worker_override().store(workers);
}

// Runs fn(lo, hi) over a partition of [begin, end) into contiguous blocks.
template <typename Fn>
void parallel_blocks(std::size_t begin, std::size_t end, Fn&& fn,
                     std::size_t grain = 1 << 14) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  const std::size_t workers =
      std::min(worker_count(), std::max<std::size_t>(1, n / grain));
  if (workers <= 1) {
    fn(begin, end);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t step = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = begin + w * step;
    const std::size_t hi = std::min(end, lo + step);
    if (lo >= hi) break;
    threads.emplace_back([&, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn,
                  std::size_t grain = 1 << 14) {
  parallel_blocks(
      begin, end,
      [&fn](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      },
      grain);
}

using EntryIndex = std::uint32_t;

// Item -> entries inverted index: for item i, entries() in
// [offsets[i], offsets[i+1]) are the positions of i in the CSR entry array,
// in ascending order (i.e. ascending user order).
class ItemIndex {
 public:
  explicit ItemIndex(const UserSetCollection& data) {
    const std::size_t num_items = data.item_bound();
    const std::size_t num_entries = data.num_entries();
    require(num_entries < std::numeric_limits<EntryIndex>::max(),
            "dataset exceeds 2^32 entries");
    const auto entries = data.entries();

    const std::size_t blocks = std::clamp<std::size_t>(
        std::min(worker_count(), num_entries / (1 << 16)), 1, 64);
    const std::size_t step = (num_entries + blocks - 1) / std::max<std::size_t>(blocks, 1);
    // counts[b][i]: occurrences of item i in entry block b.
    std::vector<std::vector<EntryIndex>> counts(blocks);
    parallel_for(
        0, blocks,
        [&](std::size_t b) {
          counts[b].assign(num_items, 0);
          const std::size_t lo = std::min(num_entries, b * step);
          const std::size_t hi = std::min(num_entries, lo + step);
          for (std::size_t e = lo; e < hi; ++e) ++counts[b][index_of(entries[e])];
        },
        1);

    offsets_.assign(num_items + 1, 0);
    std::size_t running = 0;
    for (std::size_t i = 0; i < num_items; ++i) {
      offsets_[i] = running;
      for (std::size_t b = 0; b < blocks; ++b) {
        const EntryIndex c = counts[b][i];
        counts[b][i] = static_cast<EntryIndex>(running);
        running += c;
      }
    }
    offsets_[num_items] = running;

    entries_.resize(num_entries);
    parallel_for(
        0, blocks,
        [&](std::size_t b) {
          auto& cursor = counts[b];
          const std::size_t lo = std::min(num_entries, b * step);
          const std::size_t hi = std::min(num_entries, lo + step);
          for (std::size_t e = lo; e < hi; ++e) {
            entries_[cursor[index_of(entries[e])]++] =
                static_cast<EntryIndex>(e);
          }
        },
        1);
  }

  std::size_t num_items() const { return offsets_.size() - 1; }
  std::size_t frequency(std::size_t item) const {
    return offsets_[item + 1] - offsets_[item];
  }
  std::span<const EntryIndex> entries_of(std::size_t item) const {
    return {entries_.data() + offsets_[item], frequency(item)};
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<EntryIndex> entries_;
};

// Per-entry owner lookup, materialized once for stages that need it.
inline std::vector<std::uint32_t> entry_owners(const UserSetCollection& data) {
  std::vector<std::uint32_t> owner(data.num_entries());
  parallel_for(0, data.num_users(), [&](std::size_t u) {
    const std::size_t lo = data.row_begin(u);
    std::fill(owner.begin() + lo, owner.begin() + lo + data.degree(u),
              static_cast<std::uint32_t>(u));
  });
  return owner;
}

}  // namespace dp_partition

#endif  // DP_PARTITION_PARALLEL_HPP_
