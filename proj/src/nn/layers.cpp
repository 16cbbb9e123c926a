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

#include "previvor/nn/layers.hpp"

#include <cmath>

#include "previvor/errors.hpp"

namespace previvor::nn {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, int stride, int pad, Rng& rng, bool zero_init)
    : stride_(stride), pad_(pad) {
  const double fan_in = static_cast<double>(in * kernel * kernel);
  // Kaiming-uniform for leaky ReLU.
  const double bound = zero_init ? 0.0 : std::sqrt(6.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
  weight = uniform_tensor({out, in, kernel, kernel}, bound, rng);
  bias = Tensor::zeros({out}, true);
}

void Conv2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool zero_init) {
  const double bound = zero_init ? 0.0 : std::sqrt(6.0 / static_cast<double>(in + out));
  weight = uniform_tensor({in, out}, bound, rng);
  bias = Tensor::zeros({out}, true);
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t dim)
    : gamma(Tensor::full({dim}, 1.0, true)), beta(Tensor::zeros({dim}, true)) {}

void LayerNorm::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng)
    : dim_(dim), heads_(heads), q_(dim, dim, rng), k_(dim, dim, rng), v_(dim, dim, rng), o_(dim, dim, rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("MultiHeadAttention: dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory, std::vector<Tensor>* weights) const {
  const auto N = query.dim(0), Lq = query.dim(1), Lk = memory.dim(1);
  const auto hd = dim_ / heads_;
  const Tensor q = q_(query), k = k_(memory), v = v_(memory);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // Head h of a [N, L, d] tensor, viewed as [N*L, heads, hd, 1] so the
  // channel select picks it out.
  auto split = [&](const Tensor& t, std::size_t L, std::size_t h) {
    if (heads_ == 1) return t;
    return reshape(select_channels(reshape(t, {N * L, heads_, hd, 1}), h, 1), {N, L, hd});
  };

  std::vector<Tensor> outs;
  outs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const Tensor qh = split(q, Lq, h), kh = split(k, Lk, h), vh = split(v, Lk, h);
    const Tensor attn = softmax_last(scale(bmm(qh, transpose_last2(kh)), inv_scale));
    if (weights) weights->push_back(attn);
    outs.push_back(reshape(bmm(attn, vh), {N * Lq, 1, hd, 1}));
  }
  const Tensor merged = heads_ == 1 ? outs[0] : concat_channels(outs);
  return o_(reshape(merged, {N, Lq, dim_}));
}

void MultiHeadAttention::collect(ParamList& out, const std::string& prefix) const {
  q_.collect(out, prefix + ".q");
  k_.collect(out, prefix + ".k");
  v_.collect(out, prefix + ".v");
  o_.collect(out, prefix + ".o");
}

Mlp::Mlp(std::size_t dim, std::size_t hidden, Rng& rng) : fc1_(dim, hidden, rng), fc2_(hidden, dim, rng) {}

Tensor Mlp::operator()(const Tensor& x) const { return fc2_(leaky_relu(fc1_(x), kLeakySlope)); }

void Mlp::collect(ParamList& out, const std::string& prefix) const {
  fc1_.collect(out, prefix + ".fc1");
  fc2_.collect(out, prefix + ".fc2");
}

PatchDiscriminator::PatchDiscriminator(std::size_t in_channels, std::size_t base, int layers, Rng& rng) {
  if (layers < 2) throw ConfigError("PatchDiscriminator: need at least 2 layers");
  std::size_t ch = in_channels;
  for (int i = 0; i < layers - 1; ++i) {
    const std::size_t next = base << i;
    blocks_.emplace_back(ch, next, 3, 2, 1, rng);
    ch = next;
  }
  head_ = Conv2d(ch, 1, 3, 1, 1, rng);
}

DiscriminatorOutput PatchDiscriminator::forward(const Tensor& x) const {
  DiscriminatorOutput out;
  Tensor h = x;
  for (const auto& b : blocks_) {
    h = leaky_relu(b(h), kLeakySlope);
    out.features.push_back(h);
  }
  out.logits = head_(h);
  return out;
}

ParamList PatchDiscriminator::parameters() const {
  ParamList out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, "block" + std::to_string(i));
  head_.collect(out, "head");
  return out;
}

LatentDiscriminator::LatentDiscriminator(std::size_t latent_channels, std::size_t hidden, Rng& rng)
    : fc1_(latent_channels, hidden, 1, 1, 0, rng), fc2_(hidden, hidden, 1, 1, 0, rng), fc3_(hidden, 1, 1, 1, 0, rng) {}

DiscriminatorOutput LatentDiscriminator::forward(const Tensor& z) const {
  DiscriminatorOutput out;
  Tensor h = leaky_relu(fc1_(z), kLeakySlope);
  out.features.push_back(h);
  h = leaky_relu(fc2_(h), kLeakySlope);
  out.features.push_back(h);
  out.logits = fc3_(h);
  return out;
}

ParamList LatentDiscriminator::parameters() const {
  ParamList out;
  fc1_.collect(out, "fc1");
  fc2_.collect(out, "fc2");
  fc3_.collect(out, "fc3");
  return out;
}

RandomConvPyramid::RandomConvPyramid(std::size_t in_channels, std::uint64_t seed, std::vector<std::size_t> channels)
    : in_channels_(in_channels), seed_(seed), channels_(std::move(channels)) {
  Rng rng(seed);
  std::size_t ch = in_channels;
  for (auto next : channels_) {
    levels_.emplace_back(ch, next, 3, 2, 1, rng);
    ch = next;
  }
  for (auto& l : levels_) {
    l.weight.set_requires_grad(false);
    l.bias.set_requires_grad(false);
  }
}

std::vector<Tensor> RandomConvPyramid::features(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != in_channels_) {
    throw ShapeError("RandomConvPyramid: expected " + std::to_string(in_channels_) + "-channel NCHW input, got " +
                     shape_str(x.shape()));
  }
  std::vector<Tensor> out;
  Tensor h = x;
  for (const auto& l : levels_) {
    h = leaky_relu(l(h), kLeakySlope);
    out.push_back(h);
  }
  return out;
}

std::string RandomConvPyramid::identity() const {
  std::string id = "random_conv_pyramid(in=" + std::to_string(in_channels_) + ",seed=" + std::to_string(seed_) + ",ch=";
  for (std::size_t i = 0; i < channels_.size(); ++i) id += (i ? "-" : "") + std::to_string(channels_[i]);
  return id + ")";
}

std::size_t RandomConvPyramid::pooled_dim() const {
  std::size_t d = 0;
  for (auto c : channels_) d += c;
  return d;
}

}  // namespace previvor::nn
