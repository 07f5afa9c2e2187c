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

#ifndef RELOAD_DATASET_HPP_
#define RELOAD_DATASET_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reload/common.hpp"
#include "reload/io.hpp"
#include "reload/model.hpp"
#include "reload/tensor.hpp"

namespace reload {

// Labeled samples. inputs has shape (N, d) for tabular data or (N, c, h, w)
// for images.
struct Dataset {
  TensorBuffer inputs;
  std::vector<std::int32_t> labels;
  std::string name;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  Shape3 feature_shape() const {
    const auto& s = inputs.shape();
    if (s.size() == 2) return {s[1], 1, 1};
    if (s.size() == 4) return {s[1], s[2], s[3]};
    throw Error("dataset '" + name + "' has unsupported input rank " +
                std::to_string(s.size()));
  }
  bool is_image() const { return inputs.rank() == 4; }

  void validate() const {
    if (num_classes == 0) throw Error("dataset '" + name + "' has no classes");
    if (inputs.rank() < 2 || inputs.dim(0) != labels.size()) {
      throw Error("dataset '" + name + "': " + std::to_string(labels.size()) +
                  " labels for inputs of shape " +
                  shape_string(inputs.shape()));
    }
    for (std::int32_t y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
        throw Error("dataset '" + name + "': label " + std::to_string(y) +
                    " outside [0, " + std::to_string(num_classes) + ")");
      }
    }
  }

  // Rows in the given order.
  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> shape = inputs.shape();
    shape[0] = indices.size();
    TensorBuffer out(shape);
    const std::size_t row = inputs.row_size();
    std::vector<std::int32_t> ys(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= size()) {
        throw Error("subset index " + std::to_string(indices[i]) +
                    " out of range for dataset of " + std::to_string(size()));
      }
      auto src = inputs.row(indices[i]);
      std::copy(src.begin(), src.end(), out.values().begin() + i * row);
      ys[i] = labels[indices[i]];
    }
    return {std::move(out), std::move(ys), name, num_classes};
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.inputs.row_size() != b.inputs.row_size() ||
      a.num_classes != b.num_classes) {
    throw Error("cannot concatenate datasets with different feature shapes "
                "or class counts");
  }
  std::vector<std::size_t> shape = a.inputs.shape();
  shape[0] = a.size() + b.size();
  std::vector<float> data(a.inputs.storage());
  data.insert(data.end(), b.inputs.storage().begin(),
              b.inputs.storage().end());
  std::vector<std::int32_t> labels(a.labels);
  labels.insert(labels.end(), b.labels.begin(), b.labels.end());
  return {TensorBuffer(shape, std::move(data)), std::move(labels),
          a.name + "+" + b.name, a.num_classes};
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

// Sorted complement of a sorted index set within [0, n).
inline std::vector<std::size_t> complement(std::span<const std::size_t> sorted,
                                           std::size_t n) {
  std::vector<std::size_t> out;
  out.reserve(n - std::min(n, sorted.size()));
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (j < sorted.size() && sorted[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data.

enum class SyntheticKind { kGaussianBlobs, kTwoMoons, kRing };

inline SyntheticKind parse_synthetic_kind(std::string_view s) {
  if (s == "gaussian-blobs" || s == "blobs") return SyntheticKind::kGaussianBlobs;
  if (s == "two-moons" || s == "moons") return SyntheticKind::kTwoMoons;
  if (s == "ring") return SyntheticKind::kRing;
  throw Error("unknown synthetic dataset kind '" + std::string(s) + "'");
}

inline std::string_view to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::kGaussianBlobs: return "gaussian-blobs";
    case SyntheticKind::kTwoMoons: return "two-moons";
    case SyntheticKind::kRing: return "ring";
  }
  return "unknown";
}

// Blob centers depend only on (num_classes, dim) so that train and held-out
// sets drawn with different seeds share one distribution.
inline std::vector<std::vector<double>> blob_centers(std::size_t num_classes,
                                                     std::size_t dim) {
  constexpr double kRadius = 3.0;
  std::vector<std::vector<double>> centers(num_classes,
                                           std::vector<double>(dim, 0.0));
  if (dim == 2) {
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double angle = 2 * std::numbers::pi * k / num_classes;
      centers[k] = {kRadius * std::cos(angle), kRadius * std::sin(angle)};
    }
    return centers;
  }
  Rng rng = make_rng(0xb10b5ULL, num_classes * 1000 + dim);
  for (auto& c : centers) {
    double norm = 0;
    for (double& v : c) {
      v = standard_normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : c) v *= kRadius / norm;
  }
  return centers;
}

// Class-balanced synthetic dataset; sample i belongs to class i % C.
inline Dataset make_synthetic(SyntheticKind kind, std::size_t n,
                              std::size_t num_classes, double noise,
                              std::uint64_t seed, std::size_t dim = 2) {
  if (num_classes == 0 || n < num_classes) {
    throw Error("make_synthetic: need n >= num_classes > 0");
  }
  if (dim < 2) throw Error("make_synthetic: dim must be at least 2");
  if (kind != SyntheticKind::kGaussianBlobs && dim != 2) {
    throw Error("make_synthetic: only gaussian-blobs supports dim != 2");
  }
  if (kind == SyntheticKind::kTwoMoons && num_classes != 2) {
    throw Error("make_synthetic: two-moons has exactly 2 classes");
  }
  Rng rng = make_rng(seed, 1);
  TensorBuffer x({n, dim});
  std::vector<std::int32_t> y(n);
  const auto centers = kind == SyntheticKind::kGaussianBlobs
                           ? blob_centers(num_classes, dim)
                           : std::vector<std::vector<double>>{};
  std::vector<std::size_t> per_class(num_classes, 0);
  for (std::size_t i = 0; i < n; ++i) ++per_class[i % num_classes];
  std::vector<std::size_t> seen(num_classes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % num_classes;
    y[i] = static_cast<std::int32_t>(k);
    auto row = x.row(i);
    switch (kind) {
      case SyntheticKind::kGaussianBlobs:
        for (std::size_t j = 0; j < dim; ++j) {
          row[j] = static_cast<float>(centers[k][j] +
                                      noise * standard_normal(rng));
        }
        break;
      case SyntheticKind::kTwoMoons: {
        const double denom = per_class[k] > 1 ? per_class[k] - 1 : 1;
        const double t = std::numbers::pi * seen[k] / denom;
        double px = k == 0 ? std::cos(t) : 1 - std::cos(t);
        double py = k == 0 ? std::sin(t) : 0.5 - std::sin(t);
        px += noise * standard_normal(rng);
        py += noise * standard_normal(rng);
        row[0] = static_cast<float>(px);
        row[1] = static_cast<float>(py);
        break;
      }
      case SyntheticKind::kRing: {
        const double angle = uniform(rng, 0, 2 * std::numbers::pi);
        const double radius = 1.0 + k + noise * standard_normal(rng);
        row[0] = static_cast<float>(radius * std::cos(angle));
        row[1] = static_cast<float>(radius * std::sin(angle));
        break;
      }
    }
    ++seen[k];
  }
  return {std::move(x), std::move(y), std::string(to_string(kind)),
          num_classes};
}

// Procedural image classification: one shape class per label, drawn in a
// random color at a random position over Gaussian background noise. Shapes
// keep out of the top-left 3x3 corner, where backdoor triggers go.
// Classes: 0 square, 1 disk, 2 horizontal bar, 3 vertical bar, 4 plus,
// 5 diagonal.
inline constexpr std::size_t kMaxShapeClasses = 6;

inline Dataset make_shapes(std::size_t n, std::size_t num_classes,
                           std::size_t size, std::size_t channels,
                           double noise, std::uint64_t seed) {
  if (num_classes == 0 || num_classes > kMaxShapeClasses) {
    throw Error("make_shapes: num_classes must be in [1, 6]");
  }
  if (n < num_classes) throw Error("make_shapes: need n >= num_classes");
  if (size < 8) throw Error("make_shapes: image size must be at least 8");
  if (channels == 0) throw Error("make_shapes: need at least one channel");
  Rng rng = make_rng(seed, 2);
  TensorBuffer x({n, channels, size, size});
  std::vector<std::int32_t> y(n);
  const std::size_t margin = 3;
  const std::size_t span = size - margin;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % num_classes;
    y[i] = static_cast<std::int32_t>(k);
    auto img = x.row(i);
    for (float& v : img) v = static_cast<float>(noise * standard_normal(rng));
    std::vector<double> color(channels);
    for (double& c : color) c = uniform(rng, 0.6, 1.0);
    const std::size_t extent = span / 2 + uniform_index(rng, span / 4 + 1);
    const std::size_t top = margin + uniform_index(rng, span - extent + 1);
    const std::size_t left = margin + uniform_index(rng, span - extent + 1);
    const double mid = (extent - 1) / 2.0;
    const double thick = std::max(1.0, extent / 4.0);
    for (std::size_t r = 0; r < extent; ++r) {
      for (std::size_t c = 0; c < extent; ++c) {
        const double dr = r - mid, dc = c - mid;
        bool on = false;
        switch (k) {
          case 0: on = true; break;
          case 1: on = dr * dr + dc * dc <= (mid + 0.5) * (mid + 0.5); break;
          case 2: on = std::abs(dr) < thick / 2 + 0.01; break;
          case 3: on = std::abs(dc) < thick / 2 + 0.01; break;
          case 4:
            on = std::abs(dr) < thick / 2 + 0.01 ||
                 std::abs(dc) < thick / 2 + 0.01;
            break;
          case 5: on = std::abs(dr - dc) < thick / 2 + 0.01; break;
        }
        if (!on) continue;
        for (std::size_t ch = 0; ch < channels; ++ch) {
          img[(ch * size + top + r) * size + left + c] +=
              static_cast<float>(color[ch]);
        }
      }
    }
  }
  return {std::move(x), std::move(y), "shapes", num_classes};
}

// ---------------------------------------------------------------------------
// Splits.

// Forget/manipulated index sets. In classical mode manipulated is empty and
// the retain set is the complement of forget. In corrective mode forget is a
// gamma-fraction of manipulated.
struct SplitSpec {
  std::vector<std::size_t> forget_indices;
  std::vector<std::size_t> manipulated_indices;
  double gamma = 0;
  std::uint64_t seed = 0;

  std::vector<std::size_t> retain_indices(std::size_t n) const {
    return complement(forget_indices, n);
  }
};

inline SplitSpec split_random(const Dataset& data, double forget_fraction,
                              std::uint64_t seed) {
  if (!(forget_fraction > 0 && forget_fraction < 1)) {
    throw Error("split_random: forget fraction must be in (0, 1)");
  }
  Rng rng = make_rng(seed, 3);
  auto perm = permutation(data.size(), rng);
  perm.resize(round_fraction(forget_fraction, data.size()));
  std::sort(perm.begin(), perm.end());
  return {std::move(perm), {}, 0, seed};
}

inline SplitSpec split_in_class(const Dataset& data, std::int32_t class_id,
                                std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == class_id) members.push_back(i);
  }
  if (members.size() < count) {
    throw Error("split_in_class: class " + std::to_string(class_id) +
                " has " + std::to_string(members.size()) +
                " members, requested " + std::to_string(count));
  }
  Rng rng = make_rng(seed, 4);
  shuffle(std::span<std::size_t>(members), rng);
  members.resize(count);
  std::sort(members.begin(), members.end());
  return {std::move(members), {}, 0, seed};
}

// Identifies round(gamma * |manipulated|) samples as the forget set. The
// order comes from a permutation that depends only on the seed, so forget
// sets for increasing gamma are nested.
inline SplitSpec split_corrective(std::vector<std::size_t> manipulated,
                                  double gamma, std::uint64_t seed) {
  if (!(gamma >= 0 && gamma <= 1)) {
    throw Error("split_corrective: gamma must be in [0, 1]");
  }
  std::sort(manipulated.begin(), manipulated.end());
  Rng rng = make_rng(seed, 5);
  const auto perm = permutation(manipulated.size(), rng);
  const std::size_t count = round_fraction(gamma, manipulated.size());
  std::vector<std::size_t> forget;
  for (std::size_t i = 0; i < count; ++i) forget.push_back(manipulated[perm[i]]);
  std::sort(forget.begin(), forget.end());
  return {std::move(forget), std::move(manipulated), gamma, seed};
}

// ---------------------------------------------------------------------------
// Corruptions.

enum class CorruptionKind {
  kLabelFlip,
  kInterclassConfusion,
  kBackdoorPoison,
  kCovariateNoise,
};

inline CorruptionKind parse_corruption_kind(std::string_view s) {
  if (s == "label-flip") return CorruptionKind::kLabelFlip;
  if (s == "interclass-confusion") return CorruptionKind::kInterclassConfusion;
  if (s == "backdoor-poison") return CorruptionKind::kBackdoorPoison;
  if (s == "covariate-noise") return CorruptionKind::kCovariateNoise;
  throw Error("unknown corruption kind '" + std::string(s) + "'");
}

inline std::string_view to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::kLabelFlip: return "label-flip";
    case CorruptionKind::kInterclassConfusion: return "interclass-confusion";
    case CorruptionKind::kBackdoorPoison: return "backdoor-poison";
    case CorruptionKind::kCovariateNoise: return "covariate-noise";
  }
  return "unknown";
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kLabelFlip;
  // Label manipulations move source -> target. For backdoor poisoning a
  // negative source means "any class other than target".
  std::int32_t source_class = 0;
  std::int32_t target_class = 1;
  // Trigger of shape (c, h, w) with c == 1 (broadcast over channels) or c
  // equal to the image channel count.
  TensorBuffer patch;
  std::size_t patch_row = 0;
  std::size_t patch_col = 0;
  std::size_t count = 0;
  double noise_std = 1.0;
};

// Constant square trigger, the default backdoor pattern.
inline TensorBuffer constant_patch(std::size_t side, float value,
                                   std::size_t channels = 1) {
  return TensorBuffer({channels, side, side}, value);
}

struct CorruptionResult {
  Dataset data;
  std::vector<std::size_t> manipulated;
};

namespace detail {

inline std::vector<std::size_t> pick(std::vector<std::size_t> eligible,
                                     std::size_t count, Rng& rng,
                                     const char* what) {
  if (count > eligible.size()) {
    throw Error(std::string(what) + ": count " + std::to_string(count) +
                " exceeds " + std::to_string(eligible.size()) +
                " eligible samples");
  }
  shuffle(std::span<std::size_t>(eligible), rng);
  eligible.resize(count);
  return eligible;
}

}  // namespace detail

inline CorruptionResult apply_corruption(const Dataset& clean,
                                         const CorruptionSpec& spec,
                                         std::uint64_t seed) {
  Dataset out = clean;
  std::vector<std::size_t> touched;
  if (spec.count == 0) return {std::move(out), {}};
  Rng rng = make_rng(seed, 6);
  auto members_of = [&](auto pred) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (pred(clean.labels[i])) idx.push_back(i);
    }
    return idx;
  };
  auto check_pair = [&] {
    const auto C = static_cast<std::int32_t>(clean.num_classes);
    if (spec.source_class == spec.target_class) {
      throw Error("label corruption needs source_class != target_class");
    }
    if (spec.source_class < 0 || spec.source_class >= C ||
        spec.target_class < 0 || spec.target_class >= C) {
      throw Error("label corruption classes out of range");
    }
  };
  switch (spec.kind) {
    case CorruptionKind::kLabelFlip: {
      check_pair();
      touched = detail::pick(
          members_of([&](std::int32_t y) { return y == spec.source_class; }),
          spec.count, rng, "label-flip");
      for (std::size_t i : touched) out.labels[i] = spec.target_class;
      break;
    }
    case CorruptionKind::kInterclassConfusion: {
      // Half of the count source -> target, the rest target -> source.
      check_pair();
      const std::size_t forward = (spec.count + 1) / 2;
      auto a = detail::pick(
          members_of([&](std::int32_t y) { return y == spec.source_class; }),
          forward, rng, "interclass-confusion");
      auto b = detail::pick(
          members_of([&](std::int32_t y) { return y == spec.target_class; }),
          spec.count - forward, rng, "interclass-confusion");
      for (std::size_t i : a) out.labels[i] = spec.target_class;
      for (std::size_t i : b) out.labels[i] = spec.source_class;
      touched = std::move(a);
      touched.insert(touched.end(), b.begin(), b.end());
      break;
    }
    case CorruptionKind::kBackdoorPoison: {
      if (!clean.is_image()) throw Error("backdoor poisoning needs image data");
      const Shape3 img = clean.feature_shape();
      const auto& ps = spec.patch.shape();
      if (ps.size() != 3 || (ps[0] != 1 && ps[0] != img.c)) {
        throw Error("backdoor patch must have shape (1|channels, h, w)");
      }
      if (spec.patch_row + ps[1] > img.h || spec.patch_col + ps[2] > img.w) {
        throw Error("backdoor patch does not fit inside the image bounds");
      }
      if (spec.target_class < 0 ||
          spec.target_class >= static_cast<std::int32_t>(clean.num_classes)) {
        throw Error("backdoor target class out of range");
      }
      touched = detail::pick(members_of([&](std::int32_t y) {
                               return y != spec.target_class &&
                                      (spec.source_class < 0 ||
                                       y == spec.source_class);
                             }),
                             spec.count, rng, "backdoor-poison");
      for (std::size_t i : touched) {
        auto row = out.inputs.row(i);
        for (std::size_t ch = 0; ch < img.c; ++ch) {
          const std::size_t pc = ps[0] == 1 ? 0 : ch;
          for (std::size_t r = 0; r < ps[1]; ++r) {
            for (std::size_t c = 0; c < ps[2]; ++c) {
              row[(ch * img.h + spec.patch_row + r) * img.w + spec.patch_col +
                  c] = spec.patch[(pc * ps[1] + r) * ps[2] + c];
            }
          }
        }
        out.labels[i] = spec.target_class;
      }
      break;
    }
    case CorruptionKind::kCovariateNoise: {
      touched = detail::pick(all_indices(clean.size()), spec.count, rng,
                             "covariate-noise");
      for (std::size_t i : touched) {
        for (float& v : out.inputs.row(i)) {
          v += static_cast<float>(spec.noise_std * standard_normal(rng));
        }
      }
      break;
    }
  }
  std::sort(touched.begin(), touched.end());
  return {std::move(out), std::move(touched)};
}

// Maps a manipulated sample (index, inputs, label) to its corrected form.
using Correction =
    std::function<void(std::size_t, std::span<float>, std::int32_t&)>;

inline Correction label_correction(const Dataset& clean) {
  return [&clean](std::size_t i, std::span<float>, std::int32_t& label) {
    label = clean.labels.at(i);
  };
}

inline Correction covariate_correction(const Dataset& clean) {
  return [&clean](std::size_t i, std::span<float> x, std::int32_t&) {
    auto src = clean.inputs.row(i);
    std::copy(src.begin(), src.end(), x.begin());
  };
}

// Removes the trigger and restores the true label.
inline Correction backdoor_removal(const Dataset& clean) {
  return [&clean](std::size_t i, std::span<float> x, std::int32_t& label) {
    auto src = clean.inputs.row(i);
    std::copy(src.begin(), src.end(), x.begin());
    label = clean.labels.at(i);
  };
}

inline Correction correction_for(CorruptionKind kind, const Dataset& clean) {
  switch (kind) {
    case CorruptionKind::kLabelFlip:
    case CorruptionKind::kInterclassConfusion:
      return label_correction(clean);
    case CorruptionKind::kBackdoorPoison: return backdoor_removal(clean);
    case CorruptionKind::kCovariateNoise: return covariate_correction(clean);
  }
  throw Error("no correction for corruption kind");
}

// Replaces the identified samples by their corrected versions. Unidentified
// manipulated samples stay corrupted.
inline Dataset apply_replacement(const Dataset& data,
                                 std::span<const std::size_t> manipulated,
                                 std::span<const std::size_t> identified,
                                 const Correction& correction) {
  std::vector<std::size_t> m(manipulated.begin(), manipulated.end());
  std::sort(m.begin(), m.end());
  for (std::size_t i : identified) {
    if (!std::binary_search(m.begin(), m.end(), i)) {
      throw Error("apply_replacement: identified index " + std::to_string(i) +
                  " is not a manipulated sample");
    }
  }
  Dataset out = data;
  for (std::size_t i : identified) {
    correction(i, out.inputs.row(i), out.labels[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

// "RLDD" u16 version, name, u32 num_classes, u32 rank, rank x u64 dims,
// N x i32 labels, values as f32 (all little-endian).
inline constexpr std::uint16_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> serialize_dataset(const Dataset& d) {
  d.validate();
  io::ByteWriter w;
  w.magic("RLDD");
  w.u16(kDatasetVersion);
  w.str(d.name);
  w.u32(static_cast<std::uint32_t>(d.num_classes));
  w.u32(static_cast<std::uint32_t>(d.inputs.rank()));
  for (std::size_t s : d.inputs.shape()) w.u64(s);
  for (std::int32_t y : d.labels) w.i32(y);
  for (float v : d.inputs.values()) w.f32(v);
  return w.take();
}

inline Dataset deserialize_dataset(std::span<const std::uint8_t> bytes,
                                   const std::string& what = "dataset") {
  io::ByteReader r(bytes, what);
  r.expect_magic("RLDD");
  const std::uint16_t version = r.u16();
  if (version != kDatasetVersion) {
    throw Error(what + ": unsupported version " + std::to_string(version));
  }
  Dataset d;
  d.name = r.str();
  d.num_classes = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank != 2 && rank != 4) throw Error(what + ": unsupported rank");
  std::vector<std::size_t> shape(rank);
  for (auto& s : shape) s = r.u64();
  const std::size_t total = shape_product(shape);
  if (total > bytes.size()) throw Error(what + ": truncated");
  d.labels.resize(shape[0]);
  for (auto& y : d.labels) y = r.i32();
  std::vector<float> values(total);
  for (float& v : values) v = r.f32();
  r.expect_end();
  d.inputs = TensorBuffer(shape, std::move(values));
  d.validate();
  return d;
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  io::write_file(path, serialize_dataset(d));
}

inline Dataset load_dataset(const std::string& path) {
  return deserialize_dataset(io::read_file(path), path);
}

// Tabular CSV: one sample per line, feature columns followed by an integer
// label column. A first line that does not parse as numbers is a header.
// num_classes == 0 infers max(label) + 1.
inline Dataset load_csv(const std::string& path, std::size_t num_classes = 0) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::vector<float> values;
  std::vector<std::int32_t> labels;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const std::size_t comma = rest.find(',');
      std::string_view cell = rest.substr(0, comma);
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
      cells.push_back(cell);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    std::vector<float> row(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const char* first = cells[i].data();
      const char* last = first + cells[i].size();
      auto [ptr, ec] = std::from_chars(first, last, row[i]);
      if (ec != std::errc() || ptr != last) numeric = false;
    }
    if (!numeric) {
      if (labels.empty() && width == 0) continue;  // header
      throw Error(path + ":" + std::to_string(line_no) + ": non-numeric cell");
    }
    if (cells.size() < 2) {
      throw Error(path + ":" + std::to_string(line_no) +
                  ": need at least one feature and a label");
    }
    if (width == 0) width = cells.size() - 1;
    if (cells.size() - 1 != width) {
      throw Error(path + ":" + std::to_string(line_no) +
                  ": inconsistent column count");
    }
    const float label = row.back();
    if (label < 0 || label != std::floor(label)) {
      throw Error(path + ":" + std::to_string(line_no) +
                  ": label must be a non-negative integer");
    }
    labels.push_back(static_cast<std::int32_t>(label));
    values.insert(values.end(), row.begin(), row.end() - 1);
  }
  if (labels.empty()) throw Error(path + ": no samples");
  if (num_classes == 0) {
    num_classes =
        static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  }
  Dataset d{TensorBuffer({labels.size(), width}, std::move(values)),
            std::move(labels), path, num_classes};
  d.validate();
  return d;
}

}  // namespace reload

#endif  // RELOAD_DATASET_HPP_
