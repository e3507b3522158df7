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

// Gaussian-mechanism noise calibration and the release threshold.

#ifndef DP_PARTITION_CALIBRATION_HPP_
#define DP_PARTITION_CALIBRATION_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>

#include "dp_partition/core.hpp"
#include "dp_partition/normal.hpp"

namespace dp_partition {

// Upper bound h(t) on the weight a new user can place on any of its t novel
// items. The kind tag lets the pipeline check that a weighter is paired with
// the bound proved for it.
class SensitivityProfile {
 public:
  enum class Kind { kInverseSqrt, kConstant, kCustom };

  // h(t) = scale / sqrt(t).
  static SensitivityProfile inverse_sqrt(double scale = 1.0) {
    require(scale >= 0, "profile scale must be non-negative");
    return SensitivityProfile(Kind::kInverseSqrt, scale, {});
  }
  // h(t) = value.
  static SensitivityProfile constant(double value) {
    require(value >= 0, "profile value must be non-negative");
    return SensitivityProfile(Kind::kConstant, value, {});
  }
  static SensitivityProfile custom(std::function<double(std::size_t)> fn) {
    return SensitivityProfile(Kind::kCustom, 0.0, std::move(fn));
  }

  double operator()(std::size_t t) const {
    switch (kind_) {
      case Kind::kInverseSqrt:
        return scale_ / std::sqrt(static_cast<double>(t));
      case Kind::kConstant:
        return scale_;
      case Kind::kCustom:
        return fn_(t);
    }
    return 0.0;
  }

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }
  bool same_bound(const SensitivityProfile& other) const {
    return kind_ != Kind::kCustom && kind_ == other.kind_ &&
           scale_ == other.scale_;
  }
  std::string describe() const {
    switch (kind_) {
      case Kind::kInverseSqrt:
        return std::to_string(scale_) + "/sqrt(t)";
      case Kind::kConstant:
        return std::to_string(scale_);
      case Kind::kCustom:
        return "custom";
    }
    return "";
  }

 private:
  SensitivityProfile(Kind kind, double scale,
                     std::function<double(std::size_t)> fn)
      : kind_(kind), scale_(scale), fn_(std::move(fn)) {}

  Kind kind_;
  double scale_;
  std::function<double(std::size_t)> fn_;
};

// Left side of the analytic Gaussian mechanism condition: the smallest delta
// for which N(0, sigma^2) noise on an l2-sensitivity-delta2 query is
// (epsilon, delta)-DP.
inline double gaussian_mechanism_delta(double epsilon, double sigma,
                                       double delta2 = 1.0) {
  const double a = delta2 / (2.0 * sigma);
  const double b = epsilon * sigma / delta2;
  return std_normal_cdf(a - b) - std::exp(epsilon) * std_normal_cdf(-a - b);
}

inline constexpr double kSigmaLowerBracket = 1e-6;
inline constexpr double kSigmaUpperBracket = 1e6;
inline constexpr int kSigmaMaxIterations = 200;

// Minimal sigma such that the Gaussian mechanism is (epsilon, delta)-DP for
// l2 sensitivity delta2. Bisection keeps the upper end feasible, so the
// returned value always satisfies the condition.
inline double solve_sigma(const PrivacyBudget& budget, double delta2 = 1.0) {
  require(std::isfinite(budget.epsilon) && std::isfinite(budget.delta) &&
              std::isfinite(delta2),
          "calibration inputs must be finite");
  require(budget.epsilon > 0, "epsilon must be > 0");
  require(budget.delta > 0 && budget.delta <= 1, "delta must be in (0, 1]");
  require(delta2 > 0, "l2 sensitivity must be > 0");

  const auto excess = [&](double sigma) {
    return gaussian_mechanism_delta(budget.epsilon, sigma, delta2) -
           budget.delta;
  };
  double lo = kSigmaLowerBracket;
  double hi = kSigmaUpperBracket;
  if (excess(lo) <= 0) return lo;
  require(excess(hi) <= 0, "delta too small to calibrate within bracket");
  for (int it = 0; it < kSigmaMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (excess(mid) > 0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

struct RhoResult {
  double rho = 0;
  std::size_t argmax_t = 1;
};

inline constexpr std::size_t kMaxDegreeCap = 1'000'000;

// Probability mass per novel item such that the max of t draws stays below
// the threshold with probability 1 - delta/2: 1 - (1 - delta/2)^{1/t}.
inline double per_item_tail(double delta, std::size_t t) {
  return -std::expm1(std::log1p(-delta / 2.0) / static_cast<double>(t));
}

// rho = max_{t in 1..delta0} h(t) + sigma * Phi^{-1}((1 - delta/2)^{1/t}).
// The grid is scanned exhaustively; h need not be unimodal.
inline RhoResult compute_rho(double sigma, double delta, std::size_t delta0,
                             const SensitivityProfile& h) {
  require(sigma > 0 && std::isfinite(sigma), "sigma must be > 0");
  require(delta > 0 && delta <= 1, "delta must be in (0, 1]");
  require(delta0 >= 1 && delta0 <= kMaxDegreeCap,
          "delta0 must be in [1, 1e6]");
  RhoResult best{-std::numeric_limits<double>::infinity(), 1};
  for (std::size_t t = 1; t <= delta0; ++t) {
    const double value =
        h(t) + sigma * std_normal_inv_ccdf(per_item_tail(delta, t));
    if (value > best.rho) best = {value, t};
  }
  return best;
}

struct CalibrationParams {
  double sigma = 0;
  double rho = 0;
  double tau = 0;
  double beta = 0;
  std::size_t delta0 = 1;
  std::size_t rho_argmax_t = 1;
};

// Full calibration of one weight-and-threshold round: sigma for
// (epsilon, delta/2) at unit l2 sensitivity, rho from the remaining delta/2,
// and the adaptive threshold tau = rho + beta * sigma.
inline CalibrationParams calibrate(const PrivacyBudget& budget,
                                   std::size_t delta0,
                                   const SensitivityProfile& h, double beta) {
  require(beta >= 0 && std::isfinite(beta), "beta must be >= 0");
  CalibrationParams out;
  out.sigma = solve_sigma(PrivacyBudget(budget.epsilon, budget.delta / 2.0));
  const RhoResult rho = compute_rho(out.sigma, budget.delta, delta0, h);
  out.rho = rho.rho;
  out.rho_argmax_t = rho.argmax_t;
  out.beta = beta;
  out.delta0 = delta0;
  out.tau = out.rho + beta * out.sigma;
  return out;
}

}  // namespace dp_partition

#endif  // DP_PARTITION_CALIBRATION_HPP_
