// Copyright 2026 The Reload Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RELOAD_INIT_HPP_
#define RELOAD_INIT_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reload/common.hpp"
#include "reload/tensor.hpp"

namespace reload {

// Weight reset schemes used by selective reinitialization and EU-k.
enum class ResetScheme {
  kMean,
  kZero,
  kNormal,
  kUniform,
  kXavierUniform,
  kXavierNormal,
  kKaimingUniform,
  kKaimingNormal,
};

inline constexpr std::array<std::string_view, 8> kResetSchemeNames = {
    "mean",          "zero",          "normal",          "uniform",
    "xavier-uniform", "xavier-normal", "kaiming-uniform", "kaiming-normal"};

inline std::string_view to_string(ResetScheme scheme) {
  return kResetSchemeNames[static_cast<std::size_t>(scheme)];
}

inline ResetScheme parse_reset_scheme(std::string_view name) {
  for (std::size_t i = 0; i < kResetSchemeNames.size(); ++i) {
    if (kResetSchemeNames[i] == name) return static_cast<ResetScheme>(i);
  }
  throw Error("unknown reset scheme '" + std::string(name) + "'");
}

struct Fans {
  double fan_in = 1;
  double fan_out = 1;
};

// Fan computation for a tensor shape: (out, in, k...) weights use
// in*receptive and out*receptive; 1-D tensors use their length for both.
inline Fans compute_fans(std::span<const std::size_t> shape) {
  if (shape.empty()) return {};
  if (shape.size() == 1) {
    const auto n = static_cast<double>(shape[0]);
    return {n, n};
  }
  double receptive = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) {
    receptive *= static_cast<double>(shape[i]);
  }
  return {static_cast<double>(shape[1]) * receptive,
          static_cast<double>(shape[0]) * receptive};
}

// Uniform bound (or normal stddev) for the fan-based schemes. The kaiming
// variants use the ReLU gain sqrt(2) in fan-in mode.
inline double xavier_uniform_bound(const Fans& f) {
  return std::sqrt(6.0 / (f.fan_in + f.fan_out));
}
inline double xavier_normal_std(const Fans& f) {
  return std::sqrt(2.0 / (f.fan_in + f.fan_out));
}
inline double kaiming_uniform_bound(const Fans& f) {
  return std::sqrt(6.0 / f.fan_in);
}
inline double kaiming_normal_std(const Fans& f) {
  return std::sqrt(2.0 / f.fan_in);
}

// Fills a fresh tensor of `shape` according to `scheme`. The mean scheme
// needs the current values of the tensor and broadcasts their mean.
inline TensorBuffer initialize(const std::vector<std::size_t>& shape,
                               ResetScheme scheme, std::uint64_t seed,
                               std::span<const float> existing = {}) {
  TensorBuffer out(shape);
  auto values = out.values();
  Rng rng = make_rng(seed);
  const Fans fans = compute_fans(shape);
  switch (scheme) {
    case ResetScheme::kZero:
      break;
    case ResetScheme::kMean: {
      if (existing.empty()) {
        throw Error("mean reset scheme requires a non-empty tensor");
      }
      if (existing.size() != values.size()) {
        throw Error("mean reset scheme: existing tensor has " +
                    std::to_string(existing.size()) + " values, shape " +
                    shape_string(shape) + " needs " +
                    std::to_string(values.size()));
      }
      double sum = 0;
      for (float v : existing) sum += v;
      const auto mean = static_cast<float>(sum / existing.size());
      std::fill(values.begin(), values.end(), mean);
      break;
    }
    case ResetScheme::kNormal:
      for (float& v : values) v = static_cast<float>(standard_normal(rng));
      break;
    case ResetScheme::kUniform:
      for (float& v : values) v = static_cast<float>(uniform(rng, -1, 1));
      break;
    case ResetScheme::kXavierUniform:
    case ResetScheme::kKaimingUniform: {
      const double bound = scheme == ResetScheme::kXavierUniform
                               ? xavier_uniform_bound(fans)
                               : kaiming_uniform_bound(fans);
      for (float& v : values) {
        v = static_cast<float>(uniform(rng, -bound, bound));
      }
      break;
    }
    case ResetScheme::kXavierNormal:
    case ResetScheme::kKaimingNormal: {
      const double stddev = scheme == ResetScheme::kXavierNormal
                                ? xavier_normal_std(fans)
                                : kaiming_normal_std(fans);
      for (float& v : values) {
        v = static_cast<float>(stddev * standard_normal(rng));
      }
      break;
    }
  }
  return out;
}

}  // namespace reload

#endif  // RELOAD_INIT_HPP_
