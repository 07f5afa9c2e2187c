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

#ifndef RELOAD_BASELINES_HPP_
#define RELOAD_BASELINES_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "reload/common.hpp"
#include "reload/dataset.hpp"
#include "reload/init.hpp"
#include "reload/model.hpp"
#include "reload/training.hpp"

namespace reload {

enum class Method { kOriginal, kRetrain, kReload, kGa, kFt, kCfk, kEuk };

inline constexpr Method kAllMethods[] = {Method::kOriginal, Method::kRetrain,
                                         Method::kReload,   Method::kGa,
                                         Method::kFt,       Method::kCfk,
                                         Method::kEuk};

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::kOriginal: return "original";
    case Method::kRetrain: return "retrain";
    case Method::kReload: return "reload";
    case Method::kGa: return "ga";
    case Method::kFt: return "ft";
    case Method::kCfk: return "cf-k";
    case Method::kEuk: return "eu-k";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  for (Method m : kAllMethods) {
    if (to_string(m) == s) return m;
  }
  throw Error("unknown method '" + std::string(s) + "'");
}

// Whether a method can run without the forget samples. Gradient ascent
// needs them; everything else works from the model, the retain set and (for
// reload) the cached gradient.
inline bool is_partially_blind(Method m) { return m != Method::kGa; }

inline TrainResult retrain(const ArchSpec& arch, const Dataset& retain,
                           const TrainConfig& config, std::uint64_t init_seed) {
  if (retain.empty()) throw Error("retrain: retain set is empty");
  return train(ModelState::build(arch, init_seed), retain, config);
}

// `steps` full-batch ascent updates on the summed forget loss.
inline ModelState ga_unlearn(ModelState model, const Dataset& forget,
                             std::size_t steps, double lr) {
  if (forget.empty()) throw Error("ga: forget set is empty");
  if (!(lr >= 0)) throw Error("ga: lr must be >= 0");
  const auto step = static_cast<float>(lr);
  for (std::size_t s = 0; s < steps; ++s) {
    const GradientVector g = dataset_gradient(model, forget);
    auto params = model.params().values();
    for (std::size_t k = 0; k < params.size(); ++k) {
      params[k] += step * g[k];
      if (!std::isfinite(params[k])) {
        throw Error("ga: diverged at step " + std::to_string(s));
      }
    }
  }
  return model;
}

inline TrainResult ft_unlearn(ModelState model, const Dataset& retain,
                              const TrainConfig& config) {
  return train(std::move(model), retain, config);
}

// 1 for every parameter of the last k parameter-owning layers.
inline std::vector<std::uint8_t> last_k_layer_mask(const ModelState& model,
                                                   std::size_t k) {
  const auto layers = model.parametric_layers();
  if (k < 1 || k > layers.size()) {
    throw Error("k must be in [1, " + std::to_string(layers.size()) +
                "], got " + std::to_string(k));
  }
  std::vector<std::uint8_t> mask(model.num_params(), 0);
  for (std::size_t i = layers.size() - k; i < layers.size(); ++i) {
    const ParamRange r = model.param_index()[layers[i]];
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(r.offset), r.length,
                std::uint8_t{1});
  }
  return mask;
}

// Fine-tune only the last k layers.
inline TrainResult cfk_unlearn(ModelState model, const Dataset& retain,
                               std::size_t k, const TrainConfig& config) {
  const auto mask = last_k_layer_mask(model, k);
  return train(std::move(model), retain, config, mask);
}

// Reinitializes every tensor of the last k layers with the given scheme.
inline ModelState reset_last_k(ModelState model, std::size_t k,
                               ResetScheme scheme, std::uint64_t seed) {
  const auto mask = last_k_layer_mask(model, k);
  const auto& tensors = model.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    if (!mask[tensors[t].offset]) continue;
    auto values = model.tensor_values(t);
    const TensorBuffer fresh =
        initialize(tensors[t].shape, scheme, mix_seed(seed, 2000 + t), values);
    std::copy(fresh.values().begin(), fresh.values().end(), values.begin());
  }
  return model;
}

// Reset the last k layers, then train them with everything else frozen.
inline TrainResult euk_unlearn(ModelState model, const Dataset& retain,
                               std::size_t k, ResetScheme scheme,
                               const TrainConfig& config, std::uint64_t seed) {
  const auto mask = last_k_layer_mask(model, k);
  model = reset_last_k(std::move(model), k, scheme, seed);
  return train(std::move(model), retain, config, mask);
}

}  // namespace reload

#endif  // RELOAD_BASELINES_HPP_
