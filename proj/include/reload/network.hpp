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

#ifndef RELOAD_NETWORK_HPP_
#define RELOAD_NETWORK_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reload/common.hpp"
#include "reload/model.hpp"
#include "reload/tensor.hpp"

namespace reload {

enum class Reduction : std::uint8_t { kSum = 0, kMean = 1 };

// kTrain normalizes batchnorm layers with batch statistics; kEval uses the
// running statistics, which makes every sample's output independent of the
// rest of the batch.
enum class Mode : std::uint8_t { kEval, kTrain };

// Gradient aligned index-for-index with a model's parameter vector.
template <typename T>
struct BasicGradient {
  BasicTensor<T> values;
  Reduction reduction = Reduction::kSum;

  BasicGradient() = default;
  BasicGradient(std::size_t n, Reduction r) : values({n}), reduction(r) {}
  BasicGradient(BasicTensor<T> v, Reduction r)
      : values(std::move(v)), reduction(r) {}

  std::size_t size() const { return values.size(); }
  T operator[](std::size_t i) const { return values[i]; }

  BasicGradient& operator+=(const BasicGradient& other) {
    check_compatible(other, "add");
    for (std::size_t i = 0; i < size(); ++i) values[i] += other.values[i];
    return *this;
  }
  BasicGradient& operator-=(const BasicGradient& other) {
    check_compatible(other, "subtract");
    for (std::size_t i = 0; i < size(); ++i) values[i] -= other.values[i];
    return *this;
  }
  friend BasicGradient operator+(BasicGradient a, const BasicGradient& b) {
    return a += b;
  }
  friend BasicGradient operator-(BasicGradient a, const BasicGradient& b) {
    return a -= b;
  }

  void check_compatible(const BasicGradient& other, const char* op) const {
    if (other.size() != size()) {
      throw Error(std::string("cannot ") + op + " gradients of length " +
                  std::to_string(size()) + " and " +
                  std::to_string(other.size()));
    }
    if (other.reduction != reduction) {
      throw Error(std::string("cannot ") + op +
                  " gradients with different reductions");
    }
  }
};

using GradientVector = BasicGradient<float>;

template <typename T>
struct LossAndGrad {
  double loss = 0;
  BasicGradient<T> grad;
};

namespace detail {

template <typename T>
struct ForwardCache {
  std::size_t batch = 0;
  // acts[i] is the input of layer i; acts.back() holds the logits.
  std::vector<std::vector<T>> acts;
  std::vector<std::vector<T>> bn_xhat;
  std::vector<std::vector<double>> bn_invstd;
};

template <typename T>
void check_batch(const BasicModel<T>& model, const TensorBuffer& inputs) {
  if (inputs.rank() == 0 || inputs.dim(0) == 0) {
    throw Error("empty batch: leading dimension must be positive");
  }
  const std::size_t expected = model.input_shape().numel();
  if (inputs.row_size() != expected) {
    throw Error(BasicModel<T>::layer_name(0, model.layers()[0].desc) +
                ": expected " + std::to_string(expected) +
                " input values per sample, got " +
                std::to_string(inputs.row_size()) + " (batch shape " +
                shape_string(inputs.shape()) + ")");
  }
}

template <typename T>
void dense_forward(const LayerSpec& L, std::span<const T> p,
                   std::span<const T> x, std::span<T> y, std::size_t batch) {
  const std::size_t in = L.in.numel();
  const std::size_t out = L.desc.units;
  const T* w = p.data();
  const T* bias = p.data() + out * in;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * in;
    T* yb = y.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) {
      const T* wo = w + o * in;
      T acc = 0;
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xb[i];
      yb[o] = acc + bias[o];
    }
  }
}

template <typename T>
void dense_backward(const LayerSpec& L, std::span<const T> p,
                    std::span<const T> x, std::span<const T> dy,
                    std::span<T> dx, std::span<double> dp, std::size_t batch) {
  const std::size_t in = L.in.numel();
  const std::size_t out = L.desc.units;
  const T* w = p.data();
  double* dw = dp.data();
  double* db = dp.data() + out * in;
  std::fill(dx.begin(), dx.end(), T{0});
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * in;
    const T* dyb = dy.data() + b * out;
    T* dxb = dx.data() + b * in;
    for (std::size_t o = 0; o < out; ++o) {
      const T g = dyb[o];
      if (g == T{0}) continue;
      const double gd = static_cast<double>(g);
      double* dwo = dw + o * in;
      const T* wo = w + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dwo[i] += gd * static_cast<double>(xb[i]);
        dxb[i] += wo[i] * g;
      }
      db[o] += gd;
    }
  }
}

template <typename T>
void conv_forward(const LayerSpec& L, std::span<const T> p,
                  std::span<const T> x, std::span<T> y, std::size_t batch) {
  const std::size_t C = L.in.c, H = L.in.h, W = L.in.w;
  const std::size_t OC = L.out.c, OH = L.out.h, OW = L.out.w;
  const std::size_t K = L.desc.kernel, S = L.desc.stride;
  const auto P = static_cast<std::ptrdiff_t>(L.desc.padding);
  const T* w = p.data();
  const T* bias = p.data() + OC * C * K * K;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * C * H * W;
    T* yb = y.data() + b * OC * OH * OW;
    for (std::size_t oc = 0; oc < OC; ++oc) {
      T* plane = yb + oc * OH * OW;
      std::fill(plane, plane + OH * OW, bias[oc]);
      for (std::size_t ic = 0; ic < C; ++ic) {
        const T* xc = xb + ic * H * W;
        for (std::size_t ky = 0; ky < K; ++ky) {
          for (std::size_t kx = 0; kx < K; ++kx) {
            const T wv = w[((oc * C + ic) * K + ky) * K + kx];
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * S + ky) - P;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              const T* xrow = xc + iy * W;
              T* yrow = plane + oy * OW;
              for (std::size_t ox = 0; ox < OW; ++ox) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * S + kx) - P;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                yrow[ox] += wv * xrow[ix];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward(const LayerSpec& L, std::span<const T> p,
                   std::span<const T> x, std::span<const T> dy,
                   std::span<T> dx, std::span<double> dp, std::size_t batch) {
  const std::size_t C = L.in.c, H = L.in.h, W = L.in.w;
  const std::size_t OC = L.out.c, OH = L.out.h, OW = L.out.w;
  const std::size_t K = L.desc.kernel, S = L.desc.stride;
  const auto P = static_cast<std::ptrdiff_t>(L.desc.padding);
  const T* w = p.data();
  double* dw = dp.data();
  double* db = dp.data() + OC * C * K * K;
  std::fill(dx.begin(), dx.end(), T{0});
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * C * H * W;
    const T* dyb = dy.data() + b * OC * OH * OW;
    T* dxb = dx.data() + b * C * H * W;
    for (std::size_t oc = 0; oc < OC; ++oc) {
      const T* gplane = dyb + oc * OH * OW;
      double bias_acc = 0;
      for (std::size_t i = 0; i < OH * OW; ++i) bias_acc += gplane[i];
      db[oc] += bias_acc;
      for (std::size_t ic = 0; ic < C; ++ic) {
        const T* xc = xb + ic * H * W;
        T* dxc = dxb + ic * H * W;
        for (std::size_t ky = 0; ky < K; ++ky) {
          for (std::size_t kx = 0; kx < K; ++kx) {
            const std::size_t widx = ((oc * C + ic) * K + ky) * K + kx;
            const T wv = w[widx];
            double acc = 0;
            for (std::size_t oy = 0; oy < OH; ++oy) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * S + ky) - P;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              const T* xrow = xc + iy * W;
              T* dxrow = dxc + iy * W;
              const T* grow = gplane + oy * OW;
              for (std::size_t ox = 0; ox < OW; ++ox) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * S + kx) - P;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += static_cast<double>(grow[ox]) *
                       static_cast<double>(xrow[ix]);
                dxrow[ix] += wv * grow[ox];
              }
            }
            dw[widx] += acc;
          }
        }
      }
    }
  }
}

template <typename T>
void batchnorm_forward(const LayerSpec& L, std::span<const T> p,
                       std::span<const T> x, std::span<T> y, std::size_t batch,
                       Mode mode, const BatchNormStats<T>& running,
                       BatchNormStats<T>* update, std::vector<T>& xhat,
                       std::vector<double>& invstd) {
  const std::size_t C = L.in.c, HW = L.in.h * L.in.w;
  const T* gamma = p.data();
  const T* beta = p.data() + C;
  const std::size_t n = batch * HW;
  xhat.assign(x.size(), T{0});
  invstd.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0;
    double var = 0;
    if (mode == Mode::kTrain) {
      for (std::size_t b = 0; b < batch; ++b) {
        const T* xc = x.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) mean += xc[i];
      }
      mean /= static_cast<double>(n);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* xc = x.data() + (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = xc[i] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(n);
      if (update != nullptr) {
        const double unbiased =
            n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1)
                  : var;
        update->mean[c] = static_cast<T>((1 - kBatchNormMomentum) *
                                             update->mean[c] +
                                         kBatchNormMomentum * mean);
        update->var[c] = static_cast<T>((1 - kBatchNormMomentum) *
                                            update->var[c] +
                                        kBatchNormMomentum * unbiased);
      }
    } else {
      mean = running.mean[c];
      var = running.var[c];
    }
    const double inv = 1.0 / std::sqrt(var + kBatchNormEpsilon);
    invstd[c] = inv;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        const T h = static_cast<T>((x[base + i] - mean) * inv);
        xhat[base + i] = h;
        y[base + i] = gamma[c] * h + beta[c];
      }
    }
  }
}

template <typename T>
void batchnorm_backward(const LayerSpec& L, std::span<const T> p,
                        std::span<const T> dy, std::span<T> dx,
                        std::span<double> dp, std::size_t batch, Mode mode,
                        const std::vector<T>& xhat,
                        const std::vector<double>& invstd) {
  const std::size_t C = L.in.c, HW = L.in.h * L.in.w;
  const T* gamma = p.data();
  double* dgamma = dp.data();
  double* dbeta = dp.data() + C;
  const auto n = static_cast<double>(batch * HW);
  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0;
    double sum_dy_xhat = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xhat += static_cast<double>(dy[base + i]) * xhat[base + i];
      }
    }
    dgamma[c] += sum_dy_xhat;
    dbeta[c] += sum_dy;
    const double scale = static_cast<double>(gamma[c]) * invstd[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        if (mode == Mode::kTrain) {
          dx[base + i] = static_cast<T>(
              scale / n *
              (n * dy[base + i] - sum_dy - xhat[base + i] * sum_dy_xhat));
        } else {
          dx[base + i] = static_cast<T>(scale * dy[base + i]);
        }
      }
    }
  }
}

template <typename T>
void activation_forward(Activation a, std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = a == Activation::kRelu ? (x[i] > T{0} ? x[i] : T{0})
                                  : static_cast<T>(std::tanh(x[i]));
  }
}

template <typename T>
void activation_backward(Activation a, std::span<const T> x,
                         std::span<const T> y, std::span<const T> dy,
                         std::span<T> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    dx[i] = a == Activation::kRelu ? (x[i] > T{0} ? dy[i] : T{0})
                                   : dy[i] * (T{1} - y[i] * y[i]);
  }
}

template <typename T>
void forward_pass(const BasicModel<T>& model, const TensorBuffer& inputs,
                  Mode mode, std::vector<BatchNormStats<T>>* update,
                  ForwardCache<T>& cache) {
  check_batch(model, inputs);
  const std::size_t batch = inputs.dim(0);
  const auto& layers = model.layers();
  cache.batch = batch;
  cache.acts.resize(layers.size() + 1);
  cache.bn_xhat.resize(layers.size());
  cache.bn_invstd.resize(layers.size());
  cache.acts[0].assign(inputs.values().begin(), inputs.values().end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& L = layers[i];
    const auto p = model.layer_params(i);
    std::span<const T> x = cache.acts[i];
    cache.acts[i + 1].assign(batch * L.out.numel(), T{0});
    std::span<T> y = cache.acts[i + 1];
    switch (L.kind()) {
      case LayerKind::kDense: dense_forward(L, p, x, y, batch); break;
      case LayerKind::kConv2d: conv_forward(L, p, x, y, batch); break;
      case LayerKind::kBatchNorm:
        batchnorm_forward(L, p, x, y, batch, mode, model.bn_stats()[i],
                          update ? &(*update)[i] : nullptr, cache.bn_xhat[i],
                          cache.bn_invstd[i]);
        break;
      case LayerKind::kActivation:
        activation_forward(L.desc.activation, x, y);
        break;
    }
  }
}

// Backpropagates dlogits, adding parameter gradients into `grad`.
template <typename T>
void backward_pass(const BasicModel<T>& model, const ForwardCache<T>& cache,
                   std::vector<T> dy, Mode mode, std::span<double> grad) {
  const auto& layers = model.layers();
  std::vector<T> dx;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerSpec& L = layers[i];
    const auto p = model.layer_params(i);
    const ParamRange r = model.param_index()[i];
    auto dp = grad.subspan(r.offset, r.length);
    dx.assign(cache.acts[i].size(), T{0});
    switch (L.kind()) {
      case LayerKind::kDense:
        dense_backward<T>(L, p, cache.acts[i], dy, dx, dp, cache.batch);
        break;
      case LayerKind::kConv2d:
        conv_backward<T>(L, p, cache.acts[i], dy, dx, dp, cache.batch);
        break;
      case LayerKind::kBatchNorm:
        batchnorm_backward<T>(L, p, dy, dx, dp, cache.batch, mode,
                              cache.bn_xhat[i], cache.bn_invstd[i]);
        break;
      case LayerKind::kActivation:
        activation_backward<T>(L.desc.activation, cache.acts[i],
                               cache.acts[i + 1], dy, dx);
        break;
    }
    std::swap(dx, dy);
  }
}

// Cross-entropy of one row of logits; fills softmax probabilities.
template <typename T>
double cross_entropy(std::span<const T> logits, std::int32_t label,
                     std::span<double> probs) {
  double m = logits[0];
  for (T z : logits) m = std::max(m, static_cast<double>(z));
  double s = 0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    probs[c] = std::exp(static_cast<double>(logits[c]) - m);
    s += probs[c];
  }
  const double lse = m + std::log(s);
  for (double& q : probs) q /= s;
  return lse - static_cast<double>(logits[static_cast<std::size_t>(label)]);
}

template <typename T>
void check_labels(const BasicModel<T>& model, std::size_t batch,
                  std::span<const std::int32_t> labels) {
  if (labels.size() != batch) {
    throw Error("label count " + std::to_string(labels.size()) +
                " does not match batch size " + std::to_string(batch));
  }
  const auto classes = static_cast<std::int32_t>(model.num_classes());
  for (std::int32_t y : labels) {
    if (y < 0 || y >= classes) {
      throw Error("label " + std::to_string(y) + " outside [0, " +
                  std::to_string(classes) + ")");
    }
  }
}

}  // namespace detail

// Logits for a batch, shape (batch, num_classes).
template <typename T>
BasicTensor<T> forward(const BasicModel<T>& model, const TensorBuffer& batch,
                       Mode mode = Mode::kEval) {
  detail::ForwardCache<T> cache;
  detail::forward_pass<T>(model, batch, mode, nullptr, cache);
  return BasicTensor<T>({batch.dim(0), model.num_classes()},
                        std::move(cache.acts.back()));
}

// Loss without gradients.
template <typename T>
double loss(const BasicModel<T>& model, const TensorBuffer& inputs,
            std::span<const std::int32_t> labels, Reduction reduction,
            Mode mode = Mode::kEval) {
  detail::ForwardCache<T> cache;
  detail::forward_pass<T>(model, inputs, mode, nullptr, cache);
  detail::check_labels(model, cache.batch, labels);
  const std::size_t C = model.num_classes();
  std::vector<double> probs(C);
  std::span<const T> logits = cache.acts.back();
  double total = 0;
  for (std::size_t b = 0; b < cache.batch; ++b) {
    total += detail::cross_entropy<T>(logits.subspan(b * C, C), labels[b],
                                      probs);
  }
  if (!std::isfinite(total)) throw Error("non-finite loss");
  return reduction == Reduction::kMean ? total / cache.batch : total;
}

// Adds the gradient of the batch loss into a double-precision accumulator
// and returns the batch loss. Chunked callers use this to sum gradients over
// datasets larger than one batch without float round-off between chunks.
template <typename T>
double accumulate_loss_and_grad(const BasicModel<T>& model,
                                const TensorBuffer& inputs,
                                std::span<const std::int32_t> labels,
                                Reduction reduction, Mode mode,
                                std::span<double> acc,
                                std::vector<BatchNormStats<T>>* update_stats =
                                    nullptr,
                                std::size_t* correct = nullptr) {
  if (acc.size() != model.num_params()) {
    throw Error("gradient accumulator has " + std::to_string(acc.size()) +
                " entries, model has " + std::to_string(model.num_params()) +
                " parameters");
  }
  detail::ForwardCache<T> cache;
  detail::forward_pass<T>(model, inputs, mode, update_stats, cache);
  detail::check_labels(model, cache.batch, labels);
  const std::size_t C = model.num_classes();
  const std::size_t batch = cache.batch;
  const double scale = reduction == Reduction::kMean ? 1.0 / batch : 1.0;
  std::vector<double> probs(C);
  std::vector<T> dlogits(batch * C);
  std::span<const T> logits = cache.acts.back();
  double total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    total += detail::cross_entropy<T>(logits.subspan(b * C, C), labels[b],
                                      probs);
    if (correct != nullptr) {
      const auto row = logits.subspan(b * C, C);
      if (std::max_element(row.begin(), row.end()) - row.begin() ==
          labels[b]) {
        ++*correct;
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double onehot = static_cast<std::int32_t>(c) == labels[b] ? 1 : 0;
      dlogits[b * C + c] = static_cast<T>((probs[c] - onehot) * scale);
    }
  }
  if (!std::isfinite(total)) {
    throw Error("non-finite loss over a batch of " + std::to_string(batch));
  }
  detail::backward_pass<T>(model, cache, std::move(dlogits), mode, acc);
  return reduction == Reduction::kMean ? total / batch : total;
}

// Cross-entropy loss and its gradient with respect to every parameter.
// With Reduction::kSum and Mode::kEval the gradient is additive over any
// partition of the batch. Passing `update_stats` in train mode moves the
// batchnorm running statistics toward the batch statistics.
template <typename T>
LossAndGrad<T> loss_and_grad(const BasicModel<T>& model,
                             const TensorBuffer& inputs,
                             std::span<const std::int32_t> labels,
                             Reduction reduction, Mode mode = Mode::kEval,
                             std::vector<BatchNormStats<T>>* update_stats =
                                 nullptr) {
  std::vector<double> acc(model.num_params(), 0.0);
  const double value = accumulate_loss_and_grad(model, inputs, labels,
                                                reduction, mode, acc,
                                                update_stats);
  BasicGradient<T> grad(model.num_params(), reduction);
  for (std::size_t k = 0; k < acc.size(); ++k) {
    grad.values[k] = static_cast<T>(acc[k]);
  }
  return {value, std::move(grad)};
}

}  // namespace reload

#endif  // RELOAD_NETWORK_HPP_
