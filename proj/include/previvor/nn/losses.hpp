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

#include <nlohmann/json.hpp>

#include "previvor/nn/layers.hpp"
#include "previvor/nn/tensor.hpp"

namespace previvor::nn {

// Per-term weights. The first five weight the hue-correction objective; kl and
// latent_l1 belong to the luminance stage, whose remaining terms default to 1.
struct LossWeights {
  double pix = 0.1;
  double mask = 1.0;
  double per = 5.0;
  double adv = 1.0;
  double col = 0.5;
  double kl = 0.01;
  double latent_l1 = 60.0;
  double lum_pixel = 1.0;
  double lum_adv = 1.0;
  double lum_feat = 1.0;
  double lum_latent_adv = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
};

// Mean residual penalty. Smooth: 0.5 d^2 below |d| = 1, |d| - 0.5 above.
Tensor pixel_loss(const Tensor& pred, const Tensor& target, bool smooth);

// Sum of |pred - target| over masked elements divided by
// max(1, number of masked elements). `mask` is either pred-shaped or
// [N,1,H,W] and broadcast over channels.
Tensor masked_pixel_loss(const Tensor& pred, const Tensor& target, const Tensor& mask);

// mean(0.5 * (mu^2 + exp(logvar) - 1 - logvar))
Tensor kl_loss(const Tensor& mu, const Tensor& logvar);

// Hinge adversarial losses.
Tensor hinge_generator_loss(const Tensor& fake_logits);
Tensor hinge_discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits);
// Mean over layers of mean |real - fake| activation.
Tensor feature_matching_loss(const std::vector<Tensor>& real, const std::vector<Tensor>& fake);

struct AdversarialLosses {
  Tensor generator;
  Tensor discriminator;
  Tensor feature_match;
};

// Generator terms see gradients through `fake`; the discriminator term uses
// a detached copy of it.
AdversarialLosses adversarial_losses(const Discriminator& disc, const Tensor& real, const Tensor& fake);

// Sum over pyramid levels of mean L1 feature distance.
Tensor perceptual_loss(const Tensor& pred, const Tensor& target, const FeatureExtractor& extractor);

inline constexpr double kDefaultColorfulRef = 40.0;

// 1 - clamp(C / c_ref, 0, 1) averaged over the batch, with
// C = std(a) + std(b) + 0.3 * |(mean a, mean b)| on [N,2,H,W] chroma.
Tensor colorful_loss(const Tensor& pred_ab, double c_ref = kDefaultColorfulRef);

}  // namespace previvor::nn
