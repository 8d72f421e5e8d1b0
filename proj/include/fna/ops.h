// Copyright 2026 The fna Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <vector>

#include "fna/tensor.h"

// Differentiable operators. All of them record onto the tape when any input
// requires grad and gradient recording is enabled.
//
// Layout conventions: feature maps handed to `dwconv2d`, `global_avg_pool`
// and `bilinear_resize` are channel-major [C,H,W]. Per-location transforms
// (`linear`, `layernorm`, `mul_gate`) act on the trailing dimension, so the
// focal layers keep token-major [H,W,C] maps and permute around the
// depth-wise convolutions.
namespace fna::ops {

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);
template <class T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// y = x W^T + b along the trailing dimension. `b` may be undefined.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

// Depth-wise cross-correlation with zero "same" padding. Kernel sizes must
// be odd.
template <class T>
Tensor<T> dwconv2d(const Tensor<T>& x, const Tensor<T>& kernels);

// Exact erf form x * Phi(x).
template <class T> Tensor<T> gelu(const Tensor<T>& x);

template <class T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, T eps);

// [C,H,W] -> [C]
template <class T> Tensor<T> global_avg_pool(const Tensor<T>& x);

// [C,H,W] -> [C,out_h,out_w], align-corners sampling: output index o maps to
// source coordinate o * (in - 1) / (out - 1); a size-1 output samples index 0.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h,
                          std::size_t out_w);

template <class T> Tensor<T> softmax(const Tensor<T>& x);

template <class T> Tensor<T> chw_to_hwc(const Tensor<T>& x);
template <class T> Tensor<T> hwc_to_chw(const Tensor<T>& x);

// Columns [start, start + count) of the trailing dimension.
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t start, std::size_t count);

// x[..., C] * g[..., 1], the single gate value scaling every channel.
template <class T> Tensor<T> mul_gate(const Tensor<T>& x, const Tensor<T>& g);

// v[C] replicated to [H,W,C].
template <class T>
Tensor<T> tile_tokens(const Tensor<T>& v, std::size_t h, std::size_t w);

// Non-overlapping p x p patches of an [H,W,C] map, zero-padded at the
// bottom/right to a multiple of p: [ceil(H/p), ceil(W/p), p*p*C]. The patch
// vector is ordered (dy, dx, c).
template <class T> Tensor<T> patchify(const Tensor<T>& x, std::size_t patch);

// Rows of equal-length vectors -> [B, D].
template <class T> Tensor<T> stack(const std::vector<Tensor<T>>& rows);

// Each row divided by its L2 norm. A zero row raises NumericalError naming
// the row index.
template <class T> Tensor<T> l2_normalize_rows(const Tensor<T>& x);

// x[b, labels[b]] += value.
template <class T>
Tensor<T> add_onehot(const Tensor<T>& x, const std::vector<int>& labels,
                     T value);

// Mean over the batch of -log softmax(logits)[label].
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels);

}  // namespace fna::ops
