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

// Counter-based randomness. Every random quantity is a pure function of
// (stream key, counter), so stages need no per-thread generator state and
// results do not depend on scheduling.

#ifndef DP_PARTITION_RANDOM_HPP_
#define DP_PARTITION_RANDOM_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dp_partition/normal.hpp"

namespace dp_partition {

// Philox4x32-10 counter-based generator: ten rounds, 128-bit counter, 64-bit
// key.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Purpose tags; each yields an independent substream of the master seed.
enum class Substream : std::uint32_t {
  kCapping = 1,
  kNoise = 2,  // + round index
  kUserOrder = 64,
  kTrial = 65,
  kSynthetic = 66,
};

class RunSeed {
 public:
  RunSeed() = default;
  explicit RunSeed(std::uint64_t master) : master_(master) {}

  std::uint64_t master() const { return master_; }

  // Key of a purpose-tagged substream; `index` separates rounds or trials.
  std::uint64_t stream(Substream purpose, std::uint64_t index = 0) const {
    return splitmix64(master_ ^
                      splitmix64((static_cast<std::uint64_t>(purpose) << 40) ^
                                 index));
  }
  std::uint64_t noise_stream(std::size_t round) const {
    return stream(Substream::kNoise, round);
  }

 private:
  std::uint64_t master_ = 0;
};

// 128 random bits for (stream, counter_hi, counter_lo).
inline std::array<std::uint64_t, 2> keyed_bits(std::uint64_t stream,
                                               std::uint64_t counter_hi,
                                               std::uint64_t counter_lo) {
  const auto out = Philox4x32::generate(
      {static_cast<std::uint32_t>(counter_lo),
       static_cast<std::uint32_t>(counter_lo >> 32),
       static_cast<std::uint32_t>(counter_hi),
       static_cast<std::uint32_t>(counter_hi >> 32)},
      {static_cast<std::uint32_t>(stream),
       static_cast<std::uint32_t>(stream >> 32)});
  return {(std::uint64_t{out[0]} << 32) | out[1],
          (std::uint64_t{out[2]} << 32) | out[3]};
}

// Uniform integer in [0, range) from 64 random bits (multiply-shift).
inline std::uint64_t bounded(std::uint64_t bits, std::uint64_t range) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(bits) * range) >> 64);
}

// Uniform double in (0, 1): 52-bit grid offset by half a step, so both ends
// are representable and never reached.
inline double unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

// N(0, 1) draw that is a deterministic function of (stream, counter). The two
// 64-bit words form a sign bit and a lower-tail probability in (0, 1/2) with
// ~100 bits of resolution, mapped through the quantile function so both tails
// are represented well past 8 standard deviations.
inline double keyed_gaussian(std::uint64_t stream, std::uint64_t counter,
                             std::uint64_t counter_hi = 0) {
  const auto bits = keyed_bits(stream, counter_hi, counter);
  const double coarse = static_cast<double>(bits[0] >> 11);
  const double fine =
      (static_cast<double>((bits[1] >> 12) & ((1ull << 51) - 1)) + 0.5) *
      0x1.0p-51;
  const double p = 0.5 * (coarse + fine) * 0x1.0p-53;
  const double magnitude = -internal::refine_lower_tail(
      internal::lower_tail_quantile_as241(p), p);
  return (bits[1] >> 63) ? -magnitude : magnitude;
}

// Minimal UniformRandomBitGenerator over a counter-based stream, for use with
// standard algorithms in sequential code.
class CounterEngine {
 public:
  using result_type = std::uint64_t;
  CounterEngine(std::uint64_t stream, std::uint64_t counter_hi = 0)
      : stream_(stream), counter_hi_(counter_hi) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const auto bits = keyed_bits(stream_, counter_hi_, counter_++);
    spare_ = bits[1];
    have_spare_ = true;
    return bits[0];
  }

 private:
  std::uint64_t stream_;
  std::uint64_t counter_hi_;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool have_spare_ = false;
};

// Uniform random permutation of 0..n-1 driven by a counter stream.
inline std::vector<std::size_t> seeded_permutation(std::size_t n,
                                                   std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterEngine engine(stream);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[bounded(engine(), i)]);
  }
  return order;
}

}  // namespace dp_partition

#endif  // DP_PARTITION_RANDOM_HPP_
