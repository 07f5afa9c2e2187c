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

#ifndef RELOAD_TRAINING_HPP_
#define RELOAD_TRAINING_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reload/checkpoint.hpp"
#include "reload/common.hpp"
#include "reload/dataset.hpp"
#include "reload/io.hpp"
#include "reload/model.hpp"
#include "reload/network.hpp"

namespace reload {

// Stop once the epoch loss has failed to improve by min_delta for
// `patience` consecutive epochs.
struct EarlyStopping {
  double min_delta = 1e-4;
  std::size_t patience = 5;
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::optional<EarlyStopping> early_stop;
  // Step decay: multiply the rate by lr_step_gamma every lr_step_epochs
  // epochs. Zero disables it.
  std::size_t lr_step_epochs = 0;
  double lr_step_gamma = 0.1;

  void validate() const {
    if (batch_size == 0) throw Error("train config: batch_size must be > 0");
    if (!(learning_rate > 0)) {
      throw Error("train config: learning_rate must be > 0");
    }
    if (!(momentum >= 0 && momentum < 1)) {
      throw Error("train config: momentum must be in [0, 1)");
    }
    if (!(weight_decay >= 0)) {
      throw Error("train config: weight_decay must be >= 0");
    }
  }
};

struct EpochStats {
  double loss = 0;      // mean training loss over the epoch
  double accuracy = 0;  // percent of training samples classified correctly
};

struct TrainResult {
  ModelState model;
  std::vector<EpochStats> history;
  bool stopped_early = false;
};

inline constexpr std::size_t kEvalChunk = 256;

// Sum-reduced eval-mode gradient over the given rows of a dataset,
// accumulated in double precision across chunks.
inline GradientVector dataset_gradient(const ModelState& model,
                                       const Dataset& data,
                                       std::span<const std::size_t> rows) {
  std::vector<double> acc(model.num_params(), 0.0);
  for (std::size_t start = 0; start < rows.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(rows.size(), start + kEvalChunk);
    const Dataset chunk = data.subset(rows.subspan(start, stop - start));
    accumulate_loss_and_grad(model, chunk.inputs, chunk.labels,
                             Reduction::kSum, Mode::kEval,
                             std::span<double>(acc));
  }
  GradientVector grad(model.num_params(), Reduction::kSum);
  for (std::size_t k = 0; k < acc.size(); ++k) {
    grad.values[k] = static_cast<float>(acc[k]);
  }
  return grad;
}

inline GradientVector dataset_gradient(const ModelState& model,
                                       const Dataset& data) {
  const auto rows = all_indices(data.size());
  return dataset_gradient(model, data, rows);
}

// Eval-mode logits for every sample, shape (N, num_classes).
inline TensorBuffer dataset_logits(const ModelState& model,
                                   const Dataset& data) {
  TensorBuffer out({data.size(), model.num_classes()});
  for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(data.size(), start + kEvalChunk);
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < stop; ++i) rows.push_back(i);
    const Dataset chunk = data.subset(rows);
    const TensorBuffer logits = forward(model, chunk.inputs);
    std::copy(logits.values().begin(), logits.values().end(),
              out.values().begin() + start * model.num_classes());
  }
  return out;
}

// Minibatch SGD with momentum and weight decay on mean-reduced batch
// gradients. Epoch accuracy is measured on the training batches as they are
// seen. A non-empty update_mask freezes every parameter whose entry is zero.
inline TrainResult train(ModelState model, const Dataset& data,
                         const TrainConfig& config,
                         std::span<const std::uint8_t> update_mask = {}) {
  config.validate();
  if (data.empty()) throw Error("train: dataset is empty");
  if (!update_mask.empty() && update_mask.size() != model.num_params()) {
    throw Error("train: update mask length does not match parameters");
  }
  TrainResult result{std::move(model), {}, false};
  ModelState& m = result.model;
  const std::size_t n = data.size();
  const std::size_t P = m.num_params();
  std::vector<float> velocity(P, 0.0f);
  std::vector<double> grad(P, 0.0);
  std::vector<std::size_t> order = all_indices(n);
  Rng rng = make_rng(config.seed, 7);
  double best = INFINITY;
  std::size_t stale = 0;
  auto params = m.params().values();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) shuffle(std::span<std::size_t>(order), rng);
    double lr = config.learning_rate;
    if (config.lr_step_epochs > 0) {
      lr *= std::pow(config.lr_step_gamma,
                     static_cast<double>(epoch / config.lr_step_epochs));
    }
    double epoch_loss = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const Dataset batch = data.subset(
          std::span<const std::size_t>(order).subspan(start, stop - start));
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0;
      try {
        batch_loss = accumulate_loss_and_grad(
            m, batch.inputs, batch.labels, Reduction::kMean, Mode::kTrain,
            std::span<double>(grad), &m.bn_stats(), &correct);
      } catch (const Error& e) {
        throw Error("training diverged at epoch " + std::to_string(epoch) +
                    ": " + e.what());
      }
      epoch_loss += batch_loss * static_cast<double>(stop - start);
      for (std::size_t k = 0; k < P; ++k) {
        if (!update_mask.empty() && update_mask[k] == 0) continue;
        float step = static_cast<float>(grad[k]);
        if (config.weight_decay > 0) {
          step += static_cast<float>(config.weight_decay) * params[k];
        }
        if (config.momentum > 0) {
          velocity[k] = static_cast<float>(config.momentum) * velocity[k] + step;
          step = velocity[k];
        }
        params[k] -= static_cast<float>(lr) * step;
      }
      if (!std::all_of(params.begin(), params.end(),
                       [](float v) { return std::isfinite(v); })) {
        throw Error("training diverged at epoch " + std::to_string(epoch) +
                    ": non-finite parameters");
      }
    }
    const double mean_loss = epoch_loss / static_cast<double>(n);
    result.history.push_back({mean_loss, 100.0 * correct / n});
    if (config.early_stop) {
      if (mean_loss < best - config.early_stop->min_delta) {
        best = mean_loss;
        stale = 0;
      } else if (++stale >= config.early_stop->patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient snapshots.

enum class Precision : std::uint8_t { kF32 = 0, kF16 = 1 };

inline std::string_view to_string(Precision p) {
  return p == Precision::kF32 ? "f32" : "f16";
}

// Sum-reduced full-training-set gradient cached at the final parameters,
// bound to those parameters by digest.
struct GradientSnapshot {
  GradientVector grad;
  ModelHash model_hash{};
  Precision precision = Precision::kF32;
  std::string dataset_id;
};

inline GradientSnapshot snapshot_full_gradient(const ModelState& model,
                                               const Dataset& data) {
  return {dataset_gradient(model, data), model_hash(model), Precision::kF32,
          data.name};
}

// Recomputes the snapshot over the cumulative data after continued training.
inline GradientSnapshot refresh_snapshot(const ModelState& model,
                                         const Dataset& cumulative) {
  return snapshot_full_gradient(model, cumulative);
}

inline GradientSnapshot refresh_snapshot(const ModelState& model,
                                         std::span<const Dataset> parts) {
  if (parts.empty()) throw Error("refresh_snapshot: no data");
  std::vector<double> acc(model.num_params(), 0.0);
  std::string id;
  for (const Dataset& part : parts) {
    const auto rows = all_indices(part.size());
    for (std::size_t start = 0; start < rows.size(); start += kEvalChunk) {
      const std::size_t stop = std::min(rows.size(), start + kEvalChunk);
      const Dataset chunk =
          part.subset(std::span(rows).subspan(start, stop - start));
      accumulate_loss_and_grad(model, chunk.inputs, chunk.labels,
                               Reduction::kSum, Mode::kEval,
                               std::span<double>(acc));
    }
    id += (id.empty() ? "" : "+") + part.name;
  }
  GradientVector grad(model.num_params(), Reduction::kSum);
  for (std::size_t k = 0; k < acc.size(); ++k) {
    grad.values[k] = static_cast<float>(acc[k]);
  }
  return {std::move(grad), model_hash(model), Precision::kF32, id};
}

inline float round_to_half(float v) {
  return static_cast<float>(Eigen::half(v));
}

// Stores the snapshot at half precision; values stay expanded to f32 in
// memory and are exactly the f16 values.
inline GradientSnapshot quantize_snapshot(const GradientSnapshot& snapshot) {
  if (snapshot.precision != Precision::kF32) {
    throw Error("quantize_snapshot: snapshot is already f16");
  }
  GradientSnapshot out = snapshot;
  for (float& v : out.grad.values.values()) v = round_to_half(v);
  out.precision = Precision::kF16;
  return out;
}

// "RLDG" u16 version, u8 precision, 32-byte model hash, dataset id,
// u64 count, values (f32 or f16 bits, little-endian).
inline constexpr std::uint16_t kSnapshotVersion = 1;

inline std::vector<std::uint8_t> serialize_snapshot(const GradientSnapshot& s) {
  io::ByteWriter w;
  w.magic("RLDG");
  w.u16(kSnapshotVersion);
  w.u8(static_cast<std::uint8_t>(s.precision));
  w.bytes(s.model_hash);
  w.str(s.dataset_id);
  w.u64(s.grad.size());
  for (float v : s.grad.values.values()) {
    if (s.precision == Precision::kF32) {
      w.f32(v);
    } else {
      w.u16(Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(v)));
    }
  }
  return w.take();
}

inline GradientSnapshot deserialize_snapshot(std::span<const std::uint8_t> b,
                                             const std::string& what =
                                                 "snapshot") {
  io::ByteReader r(b, what);
  r.expect_magic("RLDG");
  const std::uint16_t version = r.u16();
  if (version != kSnapshotVersion) {
    throw Error(what + ": unsupported version " + std::to_string(version));
  }
  GradientSnapshot s;
  const std::uint8_t p = r.u8();
  if (p > 1) throw Error(what + ": unknown precision tag");
  s.precision = static_cast<Precision>(p);
  r.bytes(s.model_hash);
  s.dataset_id = r.str();
  const std::uint64_t n = r.u64();
  const std::size_t width = s.precision == Precision::kF32 ? 4 : 2;
  if (n > b.size() / width) throw Error(what + ": truncated");
  s.grad = GradientVector(n, Reduction::kSum);
  for (float& v : s.grad.values.values()) {
    if (s.precision == Precision::kF32) {
      v = r.f32();
    } else {
      v = static_cast<float>(
          Eigen::numext::bit_cast<Eigen::half>(r.u16()));
    }
  }
  r.expect_end();
  return s;
}

inline void save_snapshot(const GradientSnapshot& s, const std::string& path) {
  io::write_file(path, serialize_snapshot(s));
}

inline GradientSnapshot load_snapshot(const std::string& path) {
  return deserialize_snapshot(io::read_file(path), path);
}

}  // namespace reload

#endif  // RELOAD_TRAINING_HPP_
