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

#ifndef DP_PARTITION_TESTS_TEST_UTIL_HPP_
#define DP_PARTITION_TESTS_TEST_UTIL_HPP_

#include <cstddef>
#include <initializer_list>
#include <random>
#include <vector>

#include "dp_partition/core.hpp"

namespace dp_partition::testing_util {

// Builds a collection from integer item ids.
inline UserSetCollection Sets(
    std::initializer_list<std::initializer_list<std::size_t>> rows,
    std::size_t item_bound = 0) {
  std::vector<std::vector<ItemId>> sets;
  for (const auto& row : rows) {
    std::vector<ItemId> s;
    for (std::size_t i : row) s.push_back(item_id(i));
    sets.push_back(std::move(s));
  }
  return UserSetCollection::from_sets(std::move(sets), item_bound);
}

// Row u as a vector (spans lack the container typedefs gmock needs).
inline std::vector<ItemId> Row(const UserSetCollection& data, std::size_t u) {
  const auto row = data.items_of(u);
  return {row.begin(), row.end()};
}

// Random instance with degrees in [1, max_degree] over `items` items.
inline UserSetCollection RandomSets(std::mt19937_64& gen, std::size_t users,
                                    std::size_t items,
                                    std::size_t max_degree) {
  std::uniform_int_distribution<std::size_t> degree(1, max_degree);
  std::uniform_int_distribution<std::size_t> item(0, items - 1);
  std::vector<std::vector<ItemId>> sets(users);
  for (auto& s : sets) {
    const std::size_t d = degree(gen);
    for (std::size_t k = 0; k < d; ++k) s.push_back(item_id(item(gen)));
  }
  return UserSetCollection::from_sets(std::move(sets), items);
}

}  // namespace dp_partition::testing_util

#endif  // DP_PARTITION_TESTS_TEST_UTIL_HPP_
