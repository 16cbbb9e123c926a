// Copyright 2026 The previvor Authors
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

#include <vector>

#include "previvor/nn/tensor.hpp"

// Differentiable primitives. Image tensors are NCHW; token tensors are
// [batch, tokens, features].
namespace previvor::nn {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// a + s where s holds a single value.
Tensor add_broadcast(const Tensor& a, const Tensor& s);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
// sqrt with zero (sub)gradient at exactly zero.
Tensor sqrt(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

// [M,K]x[K,N] and batched [B,M,K]x[B,K,N].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor bmm(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& a);

// x[..., in] * w[in, out] + b[out]; `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor softmax_last(const Tensor& a);
Tensor layer_norm_last(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// x[N,C,H,W], w[O,C,k,k], b[O] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor upsample2x(const Tensor& x);
Tensor concat_channels(const std::vector<Tensor>& xs);
Tensor select_channels(const Tensor& x, std::size_t first, std::size_t count);

// Concatenate along dimension 0 / take item i of dimension 0 (kept as size 1).
Tensor concat_batch(const std::vector<Tensor>& xs);
Tensor slice_batch(const Tensor& x, std::size_t i);
// [K, d] -> [N, K, d]
Tensor repeat_batch(const Tensor& t, std::size_t n);

Tensor nchw_to_tokens(const Tensor& x);
Tensor tokens_to_nchw(const Tensor& t, std::size_t h, std::size_t w);

// Mean over H and W: [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);

}  // namespace previvor::nn
