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

#ifndef RELOAD_MODEL_HPP_
#define RELOAD_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "reload/common.hpp"
#include "reload/init.hpp"
#include "reload/tensor.hpp"

namespace reload {

enum class LayerKind : std::uint8_t {
  kDense = 0,
  kConv2d = 1,
  kBatchNorm = 2,
  kActivation = 3,
};

enum class Activation : std::uint8_t { kRelu = 0, kTanh = 1 };

inline std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kActivation: return "activation";
  }
  return "unknown";
}

// Channel-major feature shape. Dense layers see it flattened.
struct Shape3 {
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t numel() const { return c * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

// User-facing description of one layer; shapes are inferred when the
// architecture is built.
struct LayerDesc {
  LayerKind kind = LayerKind::kDense;
  std::size_t units = 0;  // dense outputs or conv output channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::kRelu;

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

struct LayerSpec {
  LayerDesc desc;
  Shape3 in;
  Shape3 out;

  LayerKind kind() const { return desc.kind; }
};

struct ParamRange {
  std::size_t offset = 0;
  std::size_t length = 0;
};

// One named parameter tensor (a weight or a bias) inside the flat store.
struct ParamTensor {
  std::size_t layer = 0;
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const { return shape_product(shape); }
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Running statistics of one batchnorm layer. Never trainable.
template <typename T>
struct BatchNormStats {
  std::vector<T> mean;
  std::vector<T> var;

  bool empty() const { return mean.empty(); }
  friend bool operator==(const BatchNormStats&,
                         const BatchNormStats&) = default;
};

// Parameter tensors of a layer in storage order.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>>
layer_tensor_shapes(const LayerSpec& layer) {
  const LayerDesc& d = layer.desc;
  switch (d.kind) {
    case LayerKind::kDense:
      return {{"weight", {d.units, layer.in.numel()}}, {"bias", {d.units}}};
    case LayerKind::kConv2d:
      return {{"weight", {d.units, layer.in.c, d.kernel, d.kernel}},
              {"bias", {d.units}}};
    case LayerKind::kBatchNorm:
      return {{"gamma", {layer.in.c}}, {"beta", {layer.in.c}}};
    case LayerKind::kActivation:
      return {};
  }
  return {};
}

// Architecture description: input shape plus layer list. Parses the compact
// text form used by configs and the CLI, e.g.
//   "dense:64,relu,dense:4"  or  "conv:8:3:1:1,bn,relu,conv:16:3:2:1,relu,dense:4"
// where conv:<out>:<kernel>:<stride>:<padding>.
struct ArchSpec {
  Shape3 input;
  std::vector<LayerDesc> layers;

  static ArchSpec parse(Shape3 input, std::string_view text) {
    ArchSpec arch{input, {}};
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t comma = text.find(',', pos);
      std::string_view token = text.substr(
          pos, comma == std::string_view::npos ? std::string_view::npos
                                               : comma - pos);
      while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
      while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
      if (!token.empty()) arch.layers.push_back(parse_layer(token));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (arch.layers.empty()) throw Error("architecture has no layers");
    return arch;
  }

  std::string to_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (i) out << ',';
      const LayerDesc& d = layers[i];
      switch (d.kind) {
        case LayerKind::kDense: out << "dense:" << d.units; break;
        case LayerKind::kConv2d:
          out << "conv:" << d.units << ':' << d.kernel << ':' << d.stride
              << ':' << d.padding;
          break;
        case LayerKind::kBatchNorm: out << "bn"; break;
        case LayerKind::kActivation:
          out << (d.activation == Activation::kRelu ? "relu" : "tanh");
          break;
      }
    }
    return out.str();
  }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;

 private:
  static std::size_t parse_size(std::string_view field, std::string_view tok) {
    std::size_t value = 0;
    if (field.empty()) throw Error("bad layer token '" + std::string(tok) + "'");
    for (char ch : field) {
      if (ch < '0' || ch > '9') {
        throw Error("bad layer token '" + std::string(tok) + "'");
      }
      value = value * 10 + static_cast<std::size_t>(ch - '0');
    }
    return value;
  }

  static LayerDesc parse_layer(std::string_view token) {
    std::vector<std::string_view> parts;
    std::size_t pos = 0;
    while (true) {
      const std::size_t colon = token.find(':', pos);
      parts.push_back(token.substr(pos, colon == std::string_view::npos
                                            ? std::string_view::npos
                                            : colon - pos));
      if (colon == std::string_view::npos) break;
      pos = colon + 1;
    }
    LayerDesc d;
    const std::string_view head = parts[0];
    if (head == "dense" && parts.size() == 2) {
      d.kind = LayerKind::kDense;
      d.units = parse_size(parts[1], token);
    } else if (head == "conv" && parts.size() == 5) {
      d.kind = LayerKind::kConv2d;
      d.units = parse_size(parts[1], token);
      d.kernel = parse_size(parts[2], token);
      d.stride = parse_size(parts[3], token);
      d.padding = parse_size(parts[4], token);
    } else if (head == "bn" && parts.size() == 1) {
      d.kind = LayerKind::kBatchNorm;
    } else if (head == "relu" && parts.size() == 1) {
      d.kind = LayerKind::kActivation;
      d.activation = Activation::kRelu;
    } else if (head == "tanh" && parts.size() == 1) {
      d.kind = LayerKind::kActivation;
      d.activation = Activation::kTanh;
    } else {
      throw Error("unknown layer token '" + std::string(token) + "'");
    }
    return d;
  }
};

// Flat-indexed parameter store with layer metadata. Trainable parameters of
// all layers live in `params()`; batchnorm running statistics live beside
// them and are never part of the parameter vector.
template <typename T>
class BasicModel {
 public:
  BasicModel() = default;

  // Builds the layer table with inferred shapes and default-initialized
  // parameters: kaiming-uniform weights, zero biases, unit gamma, zero beta.
  static BasicModel build(const ArchSpec& arch, std::uint64_t seed) {
    BasicModel model;
    model.arch_ = arch;
    Shape3 shape = arch.input;
    if (shape.numel() == 0) throw Error("input shape has zero elements");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
      const LayerDesc& d = arch.layers[i];
      LayerSpec spec{d, shape, shape};
      switch (d.kind) {
        case LayerKind::kDense:
          if (d.units == 0) throw Error(layer_name(i, d) + ": zero units");
          spec.out = {d.units, 1, 1};
          break;
        case LayerKind::kConv2d: {
          if (d.units == 0 || d.kernel == 0 || d.stride == 0) {
            throw Error(layer_name(i, d) + ": zero channels, kernel or stride");
          }
          const std::size_t ph = shape.h + 2 * d.padding;
          const std::size_t pw = shape.w + 2 * d.padding;
          if (ph < d.kernel || pw < d.kernel) {
            throw Error(layer_name(i, d) + ": kernel larger than padded input");
          }
          spec.out = {d.units, (ph - d.kernel) / d.stride + 1,
                      (pw - d.kernel) / d.stride + 1};
          break;
        }
        case LayerKind::kBatchNorm:
        case LayerKind::kActivation:
          break;
      }
      std::size_t length = 0;
      for (const auto& [name, tshape] : layer_tensor_shapes(spec)) {
        model.tensors_.push_back({i, name, offset + length, tshape});
        length += shape_product(tshape);
      }
      model.layers_.push_back(spec);
      model.param_index_.push_back({offset, length});
      offset += length;
      shape = spec.out;
    }
    if (model.layers_.back().kind() != LayerKind::kDense) {
      throw Error("the last layer must be dense (it produces the logits)");
    }
    model.params_ = BasicTensor<T>({offset});
    model.bn_stats_.resize(model.layers_.size());
    for (std::size_t i = 0; i < model.layers_.size(); ++i) {
      if (model.layers_[i].kind() == LayerKind::kBatchNorm) {
        const std::size_t c = model.layers_[i].in.c;
        model.bn_stats_[i].mean.assign(c, T{0});
        model.bn_stats_[i].var.assign(c, T{1});
      }
    }
    for (std::size_t t = 0; t < model.tensors_.size(); ++t) {
      const ParamTensor& pt = model.tensors_[t];
      auto dst = model.tensor_values(t);
      if (pt.name == "weight") {
        const TensorBuffer init = initialize(
            pt.shape, ResetScheme::kKaimingUniform, mix_seed(seed, t));
        std::copy(init.values().begin(), init.values().end(), dst.begin());
      } else if (pt.name == "gamma") {
        std::fill(dst.begin(), dst.end(), T{1});
      }
    }
    return model;
  }

  const ArchSpec& arch() const { return arch_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<ParamRange>& param_index() const { return param_index_; }
  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  const Shape3& input_shape() const { return arch_.input; }
  std::size_t num_classes() const { return layers_.back().out.numel(); }
  std::size_t num_params() const { return params_.size(); }

  BasicTensor<T>& params() { return params_; }
  const BasicTensor<T>& params() const { return params_; }

  std::span<T> layer_params(std::size_t layer) {
    const ParamRange r = param_index_.at(layer);
    return params_.values().subspan(r.offset, r.length);
  }
  std::span<const T> layer_params(std::size_t layer) const {
    const ParamRange r = param_index_.at(layer);
    return params_.values().subspan(r.offset, r.length);
  }
  std::span<T> tensor_values(std::size_t t) {
    const ParamTensor& pt = tensors_.at(t);
    return params_.values().subspan(pt.offset, pt.size());
  }
  std::span<const T> tensor_values(std::size_t t) const {
    const ParamTensor& pt = tensors_.at(t);
    return params_.values().subspan(pt.offset, pt.size());
  }

  std::vector<BatchNormStats<T>>& bn_stats() { return bn_stats_; }
  const std::vector<BatchNormStats<T>>& bn_stats() const { return bn_stats_; }
  bool has_batchnorm() const {
    for (const auto& s : bn_stats_) {
      if (!s.empty()) return true;
    }
    return false;
  }

  // Indices of layers that own parameters, in network order.
  std::vector<std::size_t> parametric_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (param_index_[i].length > 0) out.push_back(i);
    }
    return out;
  }

  template <typename U>
  BasicModel<U> cast() const {
    BasicModel<U> out;
    out.arch_ = arch_;
    out.layers_ = layers_;
    out.param_index_ = param_index_;
    out.tensors_ = tensors_;
    out.params_ = params_.template cast<U>();
    out.bn_stats_.resize(bn_stats_.size());
    for (std::size_t i = 0; i < bn_stats_.size(); ++i) {
      out.bn_stats_[i].mean.assign(bn_stats_[i].mean.begin(),
                                   bn_stats_[i].mean.end());
      out.bn_stats_[i].var.assign(bn_stats_[i].var.begin(),
                                  bn_stats_[i].var.end());
    }
    return out;
  }

  static std::string layer_name(std::size_t index, const LayerDesc& d) {
    return "layer " + std::to_string(index) + " (" +
           std::string(reload::to_string(d.kind)) + ")";
  }

 private:
  template <typename U>
  friend class BasicModel;

  ArchSpec arch_;
  std::vector<LayerSpec> layers_;
  std::vector<ParamRange> param_index_;
  std::vector<ParamTensor> tensors_;
  BasicTensor<T> params_;
  std::vector<BatchNormStats<T>> bn_stats_;
};

using ModelState = BasicModel<float>;

}  // namespace reload

#endif  // RELOAD_MODEL_HPP_
