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

#ifndef RELOAD_RELOAD_HPP_
#define RELOAD_RELOAD_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reload/checkpoint.hpp"
#include "reload/common.hpp"
#include "reload/dataset.hpp"
#include "reload/init.hpp"
#include "reload/model.hpp"
#include "reload/network.hpp"
#include "reload/training.hpp"

namespace reload {

// standard:   ascent + knowledge values from gradient magnitudes
// no-ascent:  skips the ascent step
// normalised: unit-L2 gradients before the knowledge value ratio
// cosine-kv:  per-tensor score 1 - cos(g_full, g_forget) (+ epsilon)
enum class Variant { kStandard, kNoAscent, kNormalised, kCosineKv };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kStandard: return "standard";
    case Variant::kNoAscent: return "no-ascent";
    case Variant::kNormalised: return "normalised";
    case Variant::kCosineKv: return "cosine-kv";
  }
  return "unknown";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "standard") return Variant::kStandard;
  if (s == "no-ascent") return Variant::kNoAscent;
  if (s == "normalised" || s == "normalized") return Variant::kNormalised;
  if (s == "cosine-kv") return Variant::kCosineKv;
  throw Error("unknown variant '" + std::string(s) + "'");
}

struct ReloadConfig {
  double eta_p = 0.1;
  double epsilon = 1e-8;
  double alpha = 0.1;
  ResetScheme reset_scheme = ResetScheme::kXavierUniform;
  TrainConfig finetune;
  double retain_subset_fraction = 1.0;
  Variant variant = Variant::kStandard;
  // Evaluate the retain gradient for knowledge values at the post-ascent
  // weights instead of reusing the one computed at the trained weights.
  bool kv_at_theta_prime = false;
  // Disabling reinitialization reduces the pipeline to ascent + fine-tune.
  bool reinit_enabled = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(eta_p > 0)) throw Error("reload config: eta_p must be > 0");
    if (!(epsilon > 0)) throw Error("reload config: epsilon must be > 0");
    if (!(alpha > 0 && alpha < 1)) {
      throw Error("reload config: alpha must be in (0, 1)");
    }
    if (!(retain_subset_fraction > 0 && retain_subset_fraction <= 1)) {
      throw Error("reload config: retain_subset_fraction must be in (0, 1]");
    }
    finetune.validate();
  }
};

// Per-parameter knowledge values and the selection derived from them.
struct KnowledgeValues {
  std::vector<double> kv;
  double threshold = 0;
  std::vector<std::uint8_t> mask;  // 1 = reinitialized

  std::size_t selected() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  }
};

inline void check_binding(const ModelState& model,
                          const GradientSnapshot& snapshot) {
  if (snapshot.grad.size() != model.num_params()) {
    throw Error("snapshot has " + std::to_string(snapshot.grad.size()) +
                " values but the model has " +
                std::to_string(model.num_params()) + " parameters");
  }
  if (snapshot.model_hash != model_hash(model)) {
    throw Error("snapshot was taken at different parameters (model hash "
                "mismatch)");
  }
}

// Gradient of the forget loss recovered from cached quantities:
// grad L(forget) = grad L(full) - grad L(retain), exact for sum reduction.
inline GradientVector forget_gradient(const GradientSnapshot& snapshot,
                                      const GradientVector& retain_grad) {
  if (snapshot.grad.reduction != Reduction::kSum ||
      retain_grad.reduction != Reduction::kSum) {
    throw Error("forget_gradient needs sum-reduced gradients");
  }
  if (snapshot.grad.size() != retain_grad.size()) {
    throw Error("forget_gradient: snapshot has " +
                std::to_string(snapshot.grad.size()) +
                " values, retain gradient " +
                std::to_string(retain_grad.size()));
  }
  return snapshot.grad - retain_grad;
}

// One ascent step along the recovered forget gradient. Batchnorm running
// statistics are left untouched.
inline ModelState ascent_step(ModelState model,
                              const GradientSnapshot& snapshot,
                              const GradientVector& retain_grad, double eta_p) {
  check_binding(model, snapshot);
  const GradientVector direction = forget_gradient(snapshot, retain_grad);
  auto params = model.params().values();
  const auto step = static_cast<float>(eta_p);
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k] += step * direction[k];
    if (!std::isfinite(params[k])) {
      throw Error("ascent step produced a non-finite parameter at index " +
                  std::to_string(k));
    }
  }
  return model;
}

namespace detail {

inline double l2_norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace detail

// Knowledge value per parameter,
//   kv_k = (|g_full_k - g_retain_k| + eps) / (|g_full_k| + eps),
// low values marking parameters that fit the forget set well. Only `kv` is
// filled; select_and_reinit completes threshold and mask. `tensors` gives
// the per-tensor grouping for the cosine variant (empty: one group).
inline KnowledgeValues knowledge_values(const GradientVector& full_grad,
                                        const GradientVector& retain_grad,
                                        double epsilon, Variant variant,
                                        std::span<const ParamTensor> tensors = {}) {
  if (!(epsilon > 0)) throw Error("knowledge_values: epsilon must be > 0");
  if (full_grad.size() != retain_grad.size()) {
    throw Error("knowledge_values: gradient lengths differ");
  }
  const std::size_t K = full_grad.size();
  std::vector<double> full(K), retain(K);
  for (std::size_t k = 0; k < K; ++k) {
    full[k] = full_grad[k];
    retain[k] = retain_grad[k];
  }
  KnowledgeValues out;
  out.kv.resize(K);
  if (variant == Variant::kCosineKv) {
    std::vector<ParamTensor> groups(tensors.begin(), tensors.end());
    if (groups.empty()) groups.push_back({0, "all", 0, {K}});
    std::size_t covered = 0;
    for (const ParamTensor& t : groups) {
      if (t.offset + t.size() > K) {
        throw Error("knowledge_values: tensor layout exceeds gradient length");
      }
      double dot = 0, nf = 0, nd = 0;
      for (std::size_t k = t.offset; k < t.offset + t.size(); ++k) {
        const double d = full[k] - retain[k];
        dot += full[k] * d;
        nf += full[k] * full[k];
        nd += d * d;
      }
      const double denom = std::sqrt(nf) * std::sqrt(nd);
      const double cosine = denom > 0 ? dot / denom : 0.0;
      const double score = 1.0 - std::clamp(cosine, -1.0, 1.0) + epsilon;
      for (std::size_t k = t.offset; k < t.offset + t.size(); ++k) {
        out.kv[k] = score;
      }
      covered += t.size();
    }
    if (covered != K) {
      throw Error("knowledge_values: tensor layout does not cover gradients");
    }
    return out;
  }
  if (variant == Variant::kNormalised) {
    const double nf = detail::l2_norm(full);
    const double nr = detail::l2_norm(retain);
    for (std::size_t k = 0; k < K; ++k) {
      full[k] = nf > 0 ? full[k] / nf : 0.0;
      retain[k] = nr > 0 ? retain[k] / nr : 0.0;
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    out.kv[k] =
        (std::abs(full[k] - retain[k]) + epsilon) / (std::abs(full[k]) + epsilon);
  }
  return out;
}

inline KnowledgeValues knowledge_values(const GradientSnapshot& snapshot,
                                        const GradientVector& retain_grad,
                                        double epsilon, Variant variant,
                                        std::span<const ParamTensor> tensors = {}) {
  return knowledge_values(snapshot.grad, retain_grad, epsilon, variant,
                          tensors);
}

// Value at ascending rank ceil(alpha * K) (1-based), at least rank 1.
inline double quantile_threshold(std::span<const double> kv, double alpha) {
  if (kv.empty()) throw Error("quantile of an empty set");
  if (!(alpha > 0 && alpha < 1)) throw Error("alpha must be in (0, 1)");
  const std::size_t rank =
      std::clamp<std::size_t>(ceil_fraction(alpha, kv.size()), 1, kv.size());
  std::vector<double> sorted(kv.begin(), kv.end());
  std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
  return sorted[rank - 1];
}

struct ReinitResult {
  ModelState model;
  KnowledgeValues kv;
};

// Reinitializes every parameter with kv <= the alpha-quantile; ties at the
// threshold are included. Fresh values are drawn per tensor (the mean
// scheme uses the tensor's pre-reset mean); every other parameter is left
// bit-identical.
inline ReinitResult select_and_reinit(ModelState model, KnowledgeValues kv,
                                      double alpha, ResetScheme scheme,
                                      std::uint64_t seed) {
  if (kv.kv.size() != model.num_params()) {
    throw Error("select_and_reinit: knowledge values do not match parameters");
  }
  kv.threshold = quantile_threshold(kv.kv, alpha);
  kv.mask.assign(kv.kv.size(), 0);
  for (std::size_t k = 0; k < kv.kv.size(); ++k) {
    kv.mask[k] = kv.kv[k] <= kv.threshold ? 1 : 0;
  }
  const auto& tensors = model.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const ParamTensor& pt = tensors[t];
    const auto first = kv.mask.begin() + static_cast<std::ptrdiff_t>(pt.offset);
    if (std::find(first, first + static_cast<std::ptrdiff_t>(pt.size()), 1) ==
        first + static_cast<std::ptrdiff_t>(pt.size())) {
      continue;
    }
    auto values = model.tensor_values(t);
    const TensorBuffer fresh =
        initialize(pt.shape, scheme, mix_seed(seed, 1000 + t), values);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (kv.mask[pt.offset + i]) values[i] = fresh[i];
    }
  }
  return {std::move(model), std::move(kv)};
}

// Fine-tunes on the retain set, or on a seed-determined subset of it when
// fraction < 1 (the same subset for every epoch).
inline TrainResult finetune(ModelState model, const Dataset& retain,
                            const TrainConfig& config, double fraction,
                            std::uint64_t seed) {
  if (retain.empty()) throw Error("finetune: retain set is empty");
  if (!(fraction > 0 && fraction <= 1)) {
    throw Error("finetune: retain subset fraction must be in (0, 1]");
  }
  if (fraction >= 1) return train(std::move(model), retain, config);
  Rng rng = make_rng(seed, 8);
  auto rows = permutation(retain.size(), rng);
  rows.resize(std::max<std::size_t>(1, round_fraction(fraction, retain.size())));
  std::sort(rows.begin(), rows.end());
  return train(std::move(model), retain.subset(rows), config);
}

// Wall-clock seconds per stage plus start offsets relative to the start of
// the call, which record the order the stages ran in.
struct StageTimings {
  double retain_gradient = 0;
  double ascent = 0;
  double knowledge_values = 0;
  double reinit = 0;
  double finetune = 0;
  double total = 0;
  double ascent_start = 0;
  double knowledge_values_start = 0;
  double reinit_start = 0;
  double finetune_start = 0;
};

struct ReloadResult {
  ModelState model;
  KnowledgeValues kv;
  StageTimings timings;
  std::vector<EpochStats> finetune_history;
};

// The full unlearning pipeline. It sees the trained model, the cached
// full-data gradient and the retain set; there is no forget-set input.
inline ReloadResult run_reload(const ModelState& model,
                               const GradientSnapshot& snapshot,
                               const Dataset& retain,
                               const ReloadConfig& config) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  auto since = [&](Clock::time_point t) {
    return std::chrono::duration<double>(t - t0).count();
  };
  std::string stage = "validate";
  try {
    config.validate();
    check_binding(model, snapshot);
    if (retain.empty()) throw Error("retain set is empty");
    ReloadResult out;

    stage = "retain-gradient";
    const GradientVector retain_grad = dataset_gradient(model, retain);
    const auto t1 = Clock::now();
    out.timings.retain_gradient = since(t1);

    stage = "ascent";
    out.timings.ascent_start = since(t1);
    ModelState primed =
        config.variant == Variant::kNoAscent
            ? model
            : ascent_step(model, snapshot, retain_grad, config.eta_p);
    const auto t2 = Clock::now();
    out.timings.ascent = since(t2) - since(t1);

    stage = "knowledge-values";
    out.timings.knowledge_values_start = since(t2);
    KnowledgeValues kv;
    if (config.kv_at_theta_prime) {
      const GradientVector moved = dataset_gradient(primed, retain);
      kv = knowledge_values(snapshot, moved, config.epsilon, config.variant,
                            model.tensors());
    } else {
      kv = knowledge_values(snapshot, retain_grad, config.epsilon,
                            config.variant, model.tensors());
    }
    const auto t3 = Clock::now();
    out.timings.knowledge_values = since(t3) - since(t2);

    stage = "reinit";
    out.timings.reinit_start = since(t3);
    if (config.reinit_enabled) {
      ReinitResult r = select_and_reinit(std::move(primed), std::move(kv),
                                         config.alpha, config.reset_scheme,
                                         config.seed);
      primed = std::move(r.model);
      kv = std::move(r.kv);
    } else {
      kv.threshold = 0;
      kv.mask.assign(kv.kv.size(), 0);
    }
    const auto t4 = Clock::now();
    out.timings.reinit = since(t4) - since(t3);

    stage = "finetune";
    out.timings.finetune_start = since(t4);
    TrainResult tuned = finetune(std::move(primed), retain, config.finetune,
                                 config.retain_subset_fraction, config.seed);
    const auto t5 = Clock::now();
    out.timings.finetune = since(t5) - since(t4);
    out.timings.total = since(t5);

    out.model = std::move(tuned.model);
    out.finetune_history = std::move(tuned.history);
    out.kv = std::move(kv);
    return out;
  } catch (const Error& e) {
    throw Error("reload stage '" + stage + "' failed: " + e.what());
  }
}

}  // namespace reload

#endif  // RELOAD_RELOAD_HPP_
