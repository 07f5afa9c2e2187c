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

#ifndef RELOAD_CHECKPOINT_HPP_
#define RELOAD_CHECKPOINT_HPP_

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reload/common.hpp"
#include "reload/io.hpp"
#include "reload/model.hpp"

namespace reload {

// Checkpoint layout (all integers little-endian):
//   "RLDM" u16 version
//   u32 input c, h, w
//   u32 layer count, then per layer: u8 kind, u8 ndims, ndims x u32 dims
//     dense      [in, out]
//     conv2d     [in_c, in_h, in_w, out_c, kernel, stride, padding]
//     batchnorm  [c, h, w]
//     activation [function, c, h, w]
//   u64 parameter count, parameters as f32
//   u8 has_bn_stats; if 1, per batchnorm layer: c means then c variances (f32)
inline constexpr std::uint16_t kCheckpointVersion = 1;

using ModelHash = std::array<std::uint8_t, 32>;

inline std::vector<std::uint8_t> serialize_model(const ModelState& model) {
  io::ByteWriter w;
  w.magic("RLDM");
  w.u16(kCheckpointVersion);
  const Shape3 in = model.input_shape();
  w.u32(static_cast<std::uint32_t>(in.c));
  w.u32(static_cast<std::uint32_t>(in.h));
  w.u32(static_cast<std::uint32_t>(in.w));
  w.u32(static_cast<std::uint32_t>(model.layers().size()));
  for (const LayerSpec& L : model.layers()) {
    std::vector<std::size_t> dims;
    switch (L.kind()) {
      case LayerKind::kDense: dims = {L.in.numel(), L.desc.units}; break;
      case LayerKind::kConv2d:
        dims = {L.in.c,      L.in.h,        L.in.w,          L.desc.units,
                L.desc.kernel, L.desc.stride, L.desc.padding};
        break;
      case LayerKind::kBatchNorm: dims = {L.in.c, L.in.h, L.in.w}; break;
      case LayerKind::kActivation:
        dims = {static_cast<std::size_t>(L.desc.activation), L.in.c, L.in.h,
                L.in.w};
        break;
    }
    w.u8(static_cast<std::uint8_t>(L.kind()));
    w.u8(static_cast<std::uint8_t>(dims.size()));
    for (std::size_t d : dims) w.u32(static_cast<std::uint32_t>(d));
  }
  w.u64(model.num_params());
  for (float v : model.params().values()) w.f32(v);
  w.u8(model.has_batchnorm() ? 1 : 0);
  if (model.has_batchnorm()) {
    for (const auto& stats : model.bn_stats()) {
      for (float v : stats.mean) w.f32(v);
      for (float v : stats.var) w.f32(v);
    }
  }
  return w.take();
}

inline ModelState deserialize_model(std::span<const std::uint8_t> bytes,
                                    const std::string& what = "checkpoint") {
  io::ByteReader r(bytes, what);
  r.expect_magic("RLDM");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw Error(what + ": unsupported version " + std::to_string(version));
  }
  ArchSpec arch;
  arch.input.c = r.u32();
  arch.input.h = r.u32();
  arch.input.w = r.u32();
  const std::uint32_t count = r.u32();
  std::vector<std::vector<std::size_t>> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = static_cast<LayerKind>(r.u8());
    const std::uint8_t ndims = r.u8();
    std::vector<std::size_t> dims(ndims);
    for (auto& d : dims) d = r.u32();
    LayerDesc d;
    d.kind = kind;
    auto need = [&](std::size_t n) {
      if (dims.size() != n) {
        throw Error(what + ": layer " + std::to_string(i) +
                    " has a malformed shape record");
      }
    };
    switch (kind) {
      case LayerKind::kDense: need(2); d.units = dims[1]; break;
      case LayerKind::kConv2d:
        need(7);
        d.units = dims[3];
        d.kernel = dims[4];
        d.stride = dims[5];
        d.padding = dims[6];
        break;
      case LayerKind::kBatchNorm: need(3); break;
      case LayerKind::kActivation:
        need(4);
        if (dims[0] > 1) throw Error(what + ": unknown activation");
        d.activation = static_cast<Activation>(dims[0]);
        break;
      default:
        throw Error(what + ": unknown layer kind " +
                    std::to_string(static_cast<int>(kind)));
    }
    arch.layers.push_back(d);
    stored.push_back(std::move(dims));
  }
  ModelState model = ModelState::build(arch, 0);
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const LayerSpec& L = model.layers()[i];
    const auto& dims = stored[i];
    const bool ok =
        (L.kind() == LayerKind::kDense && dims[0] == L.in.numel()) ||
        (L.kind() == LayerKind::kConv2d && dims[0] == L.in.c &&
         dims[1] == L.in.h && dims[2] == L.in.w) ||
        (L.kind() == LayerKind::kBatchNorm && dims[0] == L.in.c &&
         dims[1] == L.in.h && dims[2] == L.in.w) ||
        (L.kind() == LayerKind::kActivation && dims[1] == L.in.c &&
         dims[2] == L.in.h && dims[3] == L.in.w);
    if (!ok) {
      throw Error(what + ": " + ModelState::layer_name(i, L.desc) +
                  " shape record disagrees with the inferred shape");
    }
  }
  const std::uint64_t n = r.u64();
  if (n != model.num_params()) {
    throw Error(what + ": parameter count " + std::to_string(n) +
                " does not match layer table (" +
                std::to_string(model.num_params()) + ")");
  }
  for (float& v : model.params().values()) v = r.f32();
  const std::uint8_t has_bn = r.u8();
  if (has_bn > 1 || (has_bn == 1) != model.has_batchnorm()) {
    throw Error(what + ": batchnorm statistics flag disagrees with layers");
  }
  if (has_bn) {
    for (auto& stats : model.bn_stats()) {
      for (float& v : stats.mean) v = r.f32();
      for (float& v : stats.var) v = r.f32();
    }
  }
  r.expect_end();
  return model;
}

inline void save_model(const ModelState& model, const std::string& path) {
  io::write_file(path, serialize_model(model));
}

inline ModelState load_model(const std::string& path) {
  return deserialize_model(io::read_file(path), path);
}

inline ModelHash sha256(std::span<const std::uint8_t> data) {
  ModelHash out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(),
                 nullptr) != 1 ||
      len != out.size()) {
    throw Error("sha256 digest failed");
  }
  return out;
}

// Digest of the full checkpoint encoding: layer table, parameters and
// batchnorm statistics.
inline ModelHash model_hash(const ModelState& model) {
  return sha256(serialize_model(model));
}

inline std::string hex(const ModelHash& h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  for (std::uint8_t b : h) {
    s += kDigits[b >> 4];
    s += kDigits[b & 15];
  }
  return s;
}

}  // namespace reload

#endif  // RELOAD_CHECKPOINT_HPP_
