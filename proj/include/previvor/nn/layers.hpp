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

#include <cstdint>
#include <string>
#include <vector>

#include "previvor/nn/ops.hpp"
#include "previvor/nn/tensor.hpp"
#include "previvor/rng.hpp"

namespace previvor::nn {

inline constexpr double kLeakySlope = 0.2;

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, int stride, int pad, Rng& rng,
         bool zero_init = false);

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride_, pad_); }
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor weight, bias;

 private:
  int stride_ = 1;
  int pad_ = 0;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool zero_init = false);

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor weight, bias;  // weight is [in, out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor operator()(const Tensor& x) const { return layer_norm_last(x, gamma, beta); }
  void collect(ParamList& out, const std::string& prefix) const;

  Tensor gamma, beta;
};

// Multi-head scaled dot-product attention over [N, L, d] token tensors.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng);

  // When `weights` is given, each head's [N, Lq, Lk] attention matrix is
  // appended to it.
  Tensor operator()(const Tensor& query, const Tensor& memory, std::vector<Tensor>* weights = nullptr) const;
  void collect(ParamList& out, const std::string& prefix) const;

  std::size_t heads() const noexcept { return heads_; }

 private:
  std::size_t dim_ = 0, heads_ = 1;
  Linear q_, k_, v_, o_;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t dim, std::size_t hidden, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;

 private:
  Linear fc1_, fc2_;
};

struct DiscriminatorOutput {
  Tensor logits;
  std::vector<Tensor> features;
};

class Discriminator {
 public:
  virtual ~Discriminator() = default;
  virtual DiscriminatorOutput forward(const Tensor& x) const = 0;
  virtual ParamList parameters() const = 0;
};

// Strided conv patch discriminator: `layers - 1` stride-2 conv blocks
// followed by a 3x3 conv to one logit per patch.
class PatchDiscriminator final : public Discriminator {
 public:
  PatchDiscriminator(std::size_t in_channels, std::size_t base, int layers, Rng& rng);

  DiscriminatorOutput forward(const Tensor& x) const override;
  ParamList parameters() const override;

 private:
  std::vector<Conv2d> blocks_;
  Conv2d head_;
};

// Per-position MLP (1x1 convolutions) over a latent map.
class LatentDiscriminator final : public Discriminator {
 public:
  LatentDiscriminator(std::size_t latent_channels, std::size_t hidden, Rng& rng);

  DiscriminatorOutput forward(const Tensor& z) const override;
  ParamList parameters() const override;

 private:
  Conv2d fc1_, fc2_, fc3_;
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Tensor> features(const Tensor& x) const = 0;
  virtual std::string identity() const = 0;
};

class IdentityExtractor final : public FeatureExtractor {
 public:
  std::vector<Tensor> features(const Tensor& x) const override { return {x}; }
  std::string identity() const override { return "identity"; }
};

// Fixed, seeded, randomly initialised pyramid of strided 3x3 convolutions
// with leaky ReLU. Its weights never train.
class RandomConvPyramid final : public FeatureExtractor {
 public:
  RandomConvPyramid(std::size_t in_channels, std::uint64_t seed, std::vector<std::size_t> channels = {8, 16, 32});

  std::vector<Tensor> features(const Tensor& x) const override;
  std::string identity() const override;
  std::size_t pooled_dim() const;

 private:
  std::size_t in_channels_;
  std::uint64_t seed_;
  std::vector<std::size_t> channels_;
  std::vector<Conv2d> levels_;
};

}  // namespace previvor::nn
