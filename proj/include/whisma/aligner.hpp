// Copyright 2026 The whisma-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Modality aligner: two stride-2 convolutions, a residual bottleneck adapter
// and an output projection into the decoder embedding space. Templated on the
// scalar so gradient checks can run the identical graph in double precision.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "whisma/init.hpp"
#include "whisma/ops.hpp"

namespace whisma {

struct AlignerConfig {
  std::size_t d_enc = 64;
  std::size_t d_dec = 64;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t bottleneck_dim = 32;
  std::string activation = "gelu";

  void validate() const {
    if (stride != 2) throw Error("aligner: both conv strides must be 2");
    if (kernel == 0 || kernel % 2 == 0) throw Error("aligner: kernel must be odd");
    if (bottleneck_dim == 0 || bottleneck_dim >= std::max(d_enc, d_dec)) {
      throw Error("aligner: bottleneck_dim " + std::to_string(bottleneck_dim) +
                  " must be below max(d_enc, d_dec)");
    }
    if (activation != "gelu") throw Error("aligner: unsupported activation " + activation);
  }
  std::size_t downsampling() const { return stride * stride; }
};

template <typename T>
struct AlignedSpeech {
  BasicTensor<T> embeddings;       // [ceil(T_enc / 4), d_dec]
  std::size_t padded_frames = 0;   // zero rows appended to reach a multiple of 4
};

template <typename T>
class ModalityAligner {
 public:
  ModalityAligner(AlignerConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    const std::size_t d = config_.d_enc, k = config_.kernel, bn = config_.bottleneck_dim;
    const double conv_std = 1.0 / std::sqrt(static_cast<double>(d * k));
    conv1_w_ = normal_tensor<T>({d, d, k}, conv_std, rng, true);
    conv1_b_ = constant_tensor<T>({d}, T(0), true);
    conv2_w_ = normal_tensor<T>({d, d, k}, conv_std, rng, true);
    conv2_b_ = constant_tensor<T>({d}, T(0), true);
    down_w_ = normal_tensor<T>({bn, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng, true);
    down_b_ = constant_tensor<T>({bn}, T(0), true);
    // Zero up-projection: the adapter starts as the identity.
    up_w_ = constant_tensor<T>({d, bn}, T(0), true);
    up_b_ = constant_tensor<T>({d}, T(0), true);
    out_w_ = normal_tensor<T>({config_.d_dec, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng, true);
    out_b_ = constant_tensor<T>({config_.d_dec}, T(0), true);
  }

  const AlignerConfig& config() const { return config_; }

  AlignedSpeech<T> align(const BasicTensor<T>& enc) const {
    if (enc.rank() != 2 || enc.dim(1) != config_.d_enc) {
      throw ShapeError("align: expected [T, " + std::to_string(config_.d_enc) + "], got " +
                       shape_str(enc.shape()));
    }
    const std::size_t factor = config_.downsampling();
    const std::size_t extra = (factor - enc.dim(0) % factor) % factor;
    const std::size_t pad = config_.kernel / 2;
    BasicTensor<T> x = ops::transpose(ops::pad_rows(enc, extra));
    x = ops::gelu(ops::conv1d(x, conv1_w_, conv1_b_, config_.stride, pad));
    x = ops::gelu(ops::conv1d(x, conv2_w_, conv2_b_, config_.stride, pad));
    x = ops::transpose(x);
    const BasicTensor<T> adapted =
        ops::add(x, ops::linear(ops::gelu(ops::linear(x, down_w_, down_b_)), up_w_, up_b_));
    return {ops::linear(adapted, out_w_, out_b_), extra};
  }

  /// The adapter branch alone, for tests of the identity-at-init property.
  BasicTensor<T> adapter_residual(const BasicTensor<T>& x) const {
    return ops::linear(ops::gelu(ops::linear(x, down_w_, down_b_)), up_w_, up_b_);
  }

  std::vector<NamedTensor<T>> parameters() const {
    return {{"aligner.conv1.weight", conv1_w_},        {"aligner.conv1.bias", conv1_b_},
            {"aligner.conv2.weight", conv2_w_},        {"aligner.conv2.bias", conv2_b_},
            {"aligner.adapter.down.weight", down_w_},  {"aligner.adapter.down.bias", down_b_},
            {"aligner.adapter.up.weight", up_w_},      {"aligner.adapter.up.bias", up_b_},
            {"aligner.out.weight", out_w_},            {"aligner.out.bias", out_b_}};
  }

 private:
  AlignerConfig config_;
  BasicTensor<T> conv1_w_, conv1_b_, conv2_w_, conv2_b_;
  BasicTensor<T> down_w_, down_b_, up_w_, up_b_, out_w_, out_b_;
};

}  // namespace whisma
