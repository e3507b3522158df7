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

// Dataset ingestion (pairs TSV, one-document-per-line text), dataset
// statistics, coverage reporting and synthetic generators.

#ifndef DP_PARTITION_INGEST_HPP_
#define DP_PARTITION_INGEST_HPP_

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dp_partition/core.hpp"
#include "dp_partition/parallel.hpp"
#include "dp_partition/random.hpp"

namespace dp_partition {

// Interns string users/items and produces a canonical collection: item ids in
// lexicographic order of item strings, users in lexicographic order of their
// labels (or registration order when requested). The result depends only on
// the set of (user, item) pairs, not on their order.
class CollectionBuilder {
 public:
  explicit CollectionBuilder(bool sort_users = true)
      : sort_users_(sort_users) {}

  std::uint32_t add_user(std::string_view user) {
    auto [it, inserted] = user_ids_.try_emplace(
        std::string(user), static_cast<std::uint32_t>(user_names_.size()));
    if (inserted) user_names_.emplace_back(user);
    return it->second;
  }

  void add(std::uint32_t user, std::string_view item) {
    auto [it, inserted] = item_ids_.try_emplace(
        std::string(item), static_cast<std::uint32_t>(item_names_.size()));
    if (inserted) {
      require(item_names_.size() < kMaxItems, "too many distinct items");
      item_names_.emplace_back(item);
    }
    pairs_.emplace_back(user, it->second);
  }

  void add(std::string_view user, std::string_view item) {
    add(add_user(user), item);
  }

  UserSetCollection build() && {
    // Items: rank by name.
    std::vector<std::uint32_t> item_order(item_names_.size());
    for (std::uint32_t i = 0; i < item_order.size(); ++i) item_order[i] = i;
    std::sort(item_order.begin(), item_order.end(),
              [&](std::uint32_t a, std::uint32_t b) {
                return item_names_[a] < item_names_[b];
              });
    std::vector<std::uint32_t> item_rank(item_names_.size());
    std::vector<std::string> sorted_items(item_names_.size());
    for (std::uint32_t r = 0; r < item_order.size(); ++r) {
      item_rank[item_order[r]] = r;
      sorted_items[r] = std::move(item_names_[item_order[r]]);
    }
    // Users: rank by label, or keep registration order.
    std::vector<std::uint32_t> user_order(user_names_.size());
    for (std::uint32_t u = 0; u < user_order.size(); ++u) user_order[u] = u;
    if (sort_users_) {
      std::sort(user_order.begin(), user_order.end(),
                [&](std::uint32_t a, std::uint32_t b) {
                  return user_names_[a] < user_names_[b];
                });
    }
    std::vector<std::uint32_t> user_rank(user_names_.size());
    std::vector<std::string> labels(user_names_.size());
    for (std::uint32_t r = 0; r < user_order.size(); ++r) {
      user_rank[user_order[r]] = r;
      labels[r] = std::move(user_names_[user_order[r]]);
    }

    for (auto& [u, i] : pairs_) {
      u = user_rank[u];
      i = item_rank[i];
    }
    std::sort(pairs_.begin(), pairs_.end());
    pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());

    std::vector<std::size_t> offsets(labels.size() + 1, 0);
    std::vector<ItemId> items;
    items.reserve(pairs_.size());
    for (const auto& [u, i] : pairs_) {
      ++offsets[u + 1];
      items.push_back(item_id(i));
    }
    for (std::size_t u = 0; u < labels.size(); ++u) {
      offsets[u + 1] += offsets[u];
    }
    pairs_.clear();
    pairs_.shrink_to_fit();
    UserSetCollection out = UserSetCollection::from_csr(
        std::move(offsets), std::move(items), sorted_items.size());
    out.set_dictionary(
        std::make_shared<const ItemDictionary>(std::move(sorted_items)));
    out.set_user_labels(std::move(labels));
    return out;
  }

 private:
  bool sort_users_;
  std::unordered_map<std::string, std::uint32_t> user_ids_;
  std::unordered_map<std::string, std::uint32_t> item_ids_;
  std::vector<std::string> user_names_;
  std::vector<std::string> item_names_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs_;
};

namespace internal {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace internal

// `user<TAB>item` per line; blank lines are skipped and duplicate pairs
// collapse.
inline UserSetCollection read_pairs_tsv(std::istream& in) {
  CollectionBuilder builder;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    internal::strip_cr(line);
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(line_no, "expected user<TAB>item");
    }
    if (line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(line_no, "more than one tab");
    }
    const std::string_view view(line);
    const std::string_view user = view.substr(0, tab);
    const std::string_view item = view.substr(tab + 1);
    if (user.empty() || item.empty()) {
      throw ParseError(line_no, "empty user or item field");
    }
    builder.add(user, item);
  }
  if (in.bad()) throw IoError("read failure");
  return std::move(builder).build();
}

inline UserSetCollection read_pairs_tsv(const std::string& path) {
  auto in = internal::open_input(path);
  return read_pairs_tsv(in);
}

struct TokenizerSpec {
  bool lowercase = true;
};

// Lowercases and splits on runs of ASCII non-alphanumerics; bytes >= 0x80
// are kept inside tokens so UTF-8 words survive intact.
inline std::vector<std::string> tokenize(std::string_view text,
                                         const TokenizerSpec& spec = {}) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      current.push_back(spec.lowercase && c < 0x80
                            ? static_cast<char>(std::tolower(c))
                            : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// One document per line; the zero-based line index is the user id and the
// set of tokens is the user's set. Empty lines yield empty users.
inline UserSetCollection tokenize_docs(std::istream& in,
                                       const TokenizerSpec& spec = {}) {
  CollectionBuilder builder(/*sort_users=*/false);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    internal::strip_cr(line);
    const std::uint32_t user = builder.add_user(std::to_string(line_no++));
    for (const auto& token : tokenize(line, spec)) builder.add(user, token);
  }
  if (in.bad()) throw IoError("read failure");
  return std::move(builder).build();
}

inline UserSetCollection tokenize_docs(const std::string& path,
                                       const TokenizerSpec& spec = {}) {
  auto in = internal::open_input(path);
  return tokenize_docs(in, spec);
}

inline std::string item_name(const UserSetCollection& data, ItemId id) {
  if (data.dictionary() != nullptr) return data.dictionary()->name(id);
  return "item" + std::to_string(index_of(id));
}

inline void write_pairs_tsv(const UserSetCollection& data, std::ostream& out) {
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    const std::string user = data.user_labels().empty()
                                 ? "user" + std::to_string(u)
                                 : data.user_labels()[u];
    for (ItemId id : data.items_of(u)) {
      out << user << '\t' << item_name(data, id) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Statistics and coverage
// ---------------------------------------------------------------------------

struct DatasetManifest {
  std::vector<std::string> sources;
  std::string format;
  std::size_t entries = 0;
  std::size_t users = 0;
  std::size_t items = 0;
};

// Distinct users counts users with at least one item.
inline DatasetManifest compute_manifest(const UserSetCollection& data,
                                        std::vector<std::string> sources,
                                        std::string format) {
  DatasetManifest m;
  m.sources = std::move(sources);
  m.format = std::move(format);
  m.entries = data.num_entries();
  for (std::size_t u = 0; u < data.num_users(); ++u) m.users += data.degree(u) > 0;
  m.items = observed_union(data).size();
  return m;
}

// Item frequency = number of users holding the item.
inline std::vector<std::size_t> item_frequencies(const UserSetCollection& data) {
  std::vector<std::size_t> freq(data.item_bound(), 0);
  for (ItemId id : data.entries()) ++freq[index_of(id)];
  return freq;
}

struct CoverageBucket {
  std::size_t min_frequency = 0;
  std::size_t max_frequency = 0;  // inclusive; 0 means unbounded
  std::size_t total_items = 0;
  std::size_t selected_items = 0;
};

struct CoverageReport {
  std::vector<CoverageBucket> buckets;
  double user_coverage = 0;   // users with >= 1 selected item / non-empty users
  double entry_coverage = 0;  // entries on selected items / all entries
};

inline CoverageReport coverage_report(const UserSetCollection& data,
                                      const std::vector<ItemId>& selected) {
  CoverageReport report;
  report.buckets = {{1, 1}, {2, 9}, {10, 99}, {100, 999}, {1000, 0}};
  const auto freq = item_frequencies(data);
  std::vector<std::uint8_t> chosen(data.item_bound(), 0);
  for (ItemId id : selected) {
    require(index_of(id) < chosen.size() && freq[index_of(id)] > 0,
            "selected item is not in the observed union");
    chosen[index_of(id)] = 1;
  }
  for (std::size_t i = 0; i < freq.size(); ++i) {
    if (freq[i] == 0) continue;
    for (auto& b : report.buckets) {
      if (freq[i] >= b.min_frequency &&
          (b.max_frequency == 0 || freq[i] <= b.max_frequency)) {
        ++b.total_items;
        b.selected_items += chosen[i];
        break;
      }
    }
  }
  std::size_t users = 0;
  std::size_t covered_users = 0;
  std::size_t covered_entries = 0;
  for (std::size_t u = 0; u < data.num_users(); ++u) {
    if (data.degree(u) == 0) continue;
    ++users;
    bool any = false;
    for (ItemId id : data.items_of(u)) {
      covered_entries += chosen[index_of(id)];
      any = any || chosen[index_of(id)];
    }
    covered_users += any;
  }
  if (users > 0) {
    report.user_coverage =
        static_cast<double>(covered_users) / static_cast<double>(users);
  }
  if (data.num_entries() > 0) {
    report.entry_coverage = static_cast<double>(covered_entries) /
                            static_cast<double>(data.num_entries());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

namespace internal {

inline std::vector<std::string> numbered_names(std::string_view prefix,
                                               std::size_t count,
                                               std::size_t first = 0) {
  // Zero padding to a common width keeps lexicographic and numeric order
  // aligned.
  const std::size_t width = std::to_string(count + first).size();
  std::vector<std::string> names;
  names.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::string digits = std::to_string(k + first);
    std::string name(prefix);
    name.append(width - digits.size(), '0');
    name += digits;
    names.push_back(std::move(name));
  }
  return names;
}

}  // namespace internal

// n users, each holding the heavy item plus two distinct uniformly chosen
// light items out of m. Item 0 is the heavy item.
inline UserSetCollection synth_gap_instance(std::size_t n, std::size_t m,
                                            std::uint64_t seed) {
  require(n >= 1, "n must be >= 1");
  require(m >= 2, "m must be >= 2");
  const std::uint64_t stream = RunSeed(seed).stream(Substream::kSynthetic);
  std::vector<std::size_t> offsets(n + 1);
  std::vector<ItemId> items(3 * n);
  for (std::size_t u = 0; u <= n; ++u) offsets[u] = 3 * u;
  parallel_for(0, n, [&](std::size_t u) {
    CounterEngine engine(stream, u);
    std::size_t a = bounded(engine(), m);
    std::size_t b = bounded(engine(), m - 1);
    if (b >= a) ++b;
    if (a > b) std::swap(a, b);
    items[3 * u] = item_id(0);
    items[3 * u + 1] = item_id(1 + a);
    items[3 * u + 2] = item_id(1 + b);
  });
  UserSetCollection out = UserSetCollection::from_csr(
      std::move(offsets), std::move(items), m + 1);
  std::vector<std::string> names{"heavy"};
  auto light = internal::numbered_names("light", m, 1);
  names.insert(names.end(), std::make_move_iterator(light.begin()),
               std::make_move_iterator(light.end()));
  out.set_dictionary(std::make_shared<const ItemDictionary>(std::move(names)));
  out.set_user_labels(internal::numbered_names("user", n));
  return out;
}

// Zipf(exponent) sampler over ranks {1..n} by rejection-inversion
// (Hormann & Derflinger); O(1) expected time, no tables.
class ZipfSampler {
 public:
  ZipfSampler(std::uint64_t n, double exponent) : n_(n), s_(exponent) {
    require(n >= 1, "Zipf support must be non-empty");
    require(exponent > 0, "Zipf exponent must be > 0");
    h_integral_x1_ = h_integral(1.5) - 1.0;
    h_integral_n_ = h_integral(static_cast<double>(n) + 0.5);
    shift_ = 2.0 - h_integral_inverse(h_integral(2.5) - h(2.0));
  }

  template <typename Engine>
  std::uint64_t operator()(Engine& engine) const {
    while (true) {
      const double u =
          h_integral_n_ + unit_open(engine()) * (h_integral_x1_ - h_integral_n_);
      const double x = h_integral_inverse(u);
      double k = std::floor(x + 0.5);
      k = std::clamp(k, 1.0, static_cast<double>(n_));
      if (k - x <= shift_ || u >= h_integral(k + 0.5) - h(k)) {
        return static_cast<std::uint64_t>(k);
      }
    }
  }

 private:
  double h(double x) const { return std::exp(-s_ * std::log(x)); }
  double h_integral(double x) const {
    const double log_x = std::log(x);
    return helper2((1.0 - s_) * log_x) * log_x;
  }
  double h_integral_inverse(double x) const {
    double t = x * (1.0 - s_);
    if (t < -1.0) t = -1.0;
    return std::exp(helper1(t) * x);
  }
  static double helper1(double x) {
    return std::fabs(x) > 1e-8 ? std::log1p(x) / x
                               : 1.0 - x * (0.5 - x * (1.0 / 3.0 - 0.25 * x));
  }
  static double helper2(double x) {
    return std::fabs(x) > 1e-8
               ? std::expm1(x) / x
               : 1.0 + x * 0.5 * (1.0 + x / 3.0 * (1.0 + 0.25 * x));
  }

  std::uint64_t n_;
  double s_;
  double h_integral_x1_;
  double h_integral_n_;
  double shift_;
};

struct ZipfCorpusSpec {
  std::size_t users = 10000;
  std::size_t items = 100000;
  double item_exponent = 1.1;
  // User degrees: Pareto(degree_exponent) scaled by degree_min, capped at
  // degree_max, before duplicate removal.
  std::size_t degree_min = 4;
  double degree_exponent = 2.5;
  std::size_t degree_max = 1000;
  std::uint64_t seed = 1;
  bool with_names = true;
};

// Power-law corpus: heavy-tailed user degrees, Zipfian item popularity.
// Generated per user from a keyed stream, so identical for any worker count.
inline UserSetCollection synth_zipf(const ZipfCorpusSpec& spec) {
  require(spec.users >= 1 && spec.items >= 1, "empty corpus spec");
  require(spec.degree_min >= 1 && spec.degree_max >= spec.degree_min,
          "invalid degree range");
  require(spec.items <= kMaxItems, "too many items");
  const std::uint64_t stream = RunSeed(spec.seed).stream(Substream::kSynthetic);
  const ZipfSampler zipf(spec.items, spec.item_exponent);

  const auto target_degree = [&](std::size_t u) {
    CounterEngine engine(stream, u);
    const double pareto = std::pow(unit_open(engine()),
                                   -1.0 / (spec.degree_exponent - 1.0));
    const double d = std::floor(static_cast<double>(spec.degree_min) * pareto);
    return static_cast<std::size_t>(
        std::min(d, static_cast<double>(spec.degree_max)));
  };
  std::vector<std::size_t> degrees(spec.users);
  parallel_for(0, spec.users,
               [&](std::size_t u) { degrees[u] = target_degree(u); });

  // Draw, dedupe in place, then compact.
  std::vector<std::size_t> bounds(spec.users + 1, 0);
  for (std::size_t u = 0; u < spec.users; ++u) {
    bounds[u + 1] = bounds[u] + degrees[u];
  }
  std::vector<ItemId> draws(bounds.back());
  std::vector<std::size_t> kept(spec.users, 0);
  parallel_for(0, spec.users, [&](std::size_t u) {
    CounterEngine engine(stream, u);
    engine();  // skip the degree draw
    auto first = draws.begin() + static_cast<std::ptrdiff_t>(bounds[u]);
    auto last = first + static_cast<std::ptrdiff_t>(degrees[u]);
    for (auto it = first; it != last; ++it) *it = item_id(zipf(engine) - 1);
    std::sort(first, last);
    kept[u] = static_cast<std::size_t>(std::unique(first, last) - first);
  }, 1024);
  std::vector<std::size_t> offsets(spec.users + 1, 0);
  for (std::size_t u = 0; u < spec.users; ++u) {
    offsets[u + 1] = offsets[u] + kept[u];
  }
  std::size_t write = 0;
  for (std::size_t u = 0; u < spec.users; ++u) {
    for (std::size_t k = 0; k < kept[u]; ++k) draws[write++] = draws[bounds[u] + k];
  }
  draws.resize(write);
  draws.shrink_to_fit();
  UserSetCollection out = UserSetCollection::from_csr(
      std::move(offsets), std::move(draws), spec.items);
  if (spec.with_names) {
    out.set_dictionary(std::make_shared<const ItemDictionary>(
        internal::numbered_names("item", spec.items)));
    out.set_user_labels(internal::numbered_names("user", spec.users));
  }
  return out;
}

}  // namespace dp_partition

#endif  // DP_PARTITION_INGEST_HPP_
