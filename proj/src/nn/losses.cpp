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

#include "previvor/nn/losses.hpp"

#include <cmath>

#include "previvor/errors.hpp"
#include "previvor/nn/ops.hpp"

namespace previvor::nn {

void LossWeights::validate() const {
  for (double w : {pix, mask, per, adv, col, kl, latent_l1, lum_pixel, lum_adv, lum_feat, lum_latent_adv}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
}

nlohmann::json LossWeights::to_json() const {
  return {{"pix", pix},           {"mask", mask},         {"per", per},           {"adv", adv},
          {"col", col},           {"kl", kl},             {"latent_l1", latent_l1}, {"lum_pixel", lum_pixel},
          {"lum_adv", lum_adv},   {"lum_feat", lum_feat}, {"lum_latent_adv", lum_latent_adv}};
}

Tensor pixel_loss(const Tensor& pred, const Tensor& target, bool smooth) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("pixel_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  const auto p = pred.data(), t = target.data();
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i], ad = std::fabs(d);
    total += smooth ? (ad < 1.0 ? 0.5 * d * d : ad - 0.5) : ad;
  }
  return make_result({1}, {total / n}, {pred, target}, [n, smooth](Node& self) {
    const auto& p = self.parents[0]->value;
    const auto& t = self.parents[1]->value;
    const double g0 = self.grad[0] / n;
    for (std::size_t side = 0; side < 2; ++side) {
      Node& par = *self.parents[side];
      if (!par.requires_grad) continue;
      par.ensure_grad();
      const double sgn = side == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        double dd;
        if (smooth && std::fabs(d) < 1.0) dd = d;
        else dd = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        par.grad[i] += sgn * g0 * dd;
      }
    }
  });
}

Tensor masked_pixel_loss(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  if (pred.shape() != target.shape()) throw ShapeError("masked_pixel_loss: pred/target shapes differ");
  bool broadcast = false;
  if (mask.shape() != pred.shape()) {
    if (pred.rank() == 4 && mask.rank() == 4 && mask.dim(0) == pred.dim(0) && mask.dim(1) == 1 &&
        mask.dim(2) == pred.dim(2) && mask.dim(3) == pred.dim(3)) {
      broadcast = true;
    } else {
      throw ShapeError("masked_pixel_loss: mask " + shape_str(mask.shape()) + " vs " + shape_str(pred.shape()));
    }
  }
  const std::size_t C = broadcast ? pred.dim(1) : 1;
  const std::size_t HW = broadcast ? pred.dim(2) * pred.dim(3) : pred.numel();
  auto mask_at = [&, m = mask.data()](std::size_t i) {
    if (!broadcast) return m[i];
    const std::size_t n = i / (C * HW), p = i % HW;
    return m[n * HW + p];
  };
  const auto p = pred.data(), t = target.data();
  double total = 0.0, count = 0.0;
  std::vector<double> w(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    w[i] = mask_at(i) != 0.0 ? 1.0 : 0.0;
    count += w[i];
    total += w[i] * std::fabs(p[i] - t[i]);
  }
  const double denom = std::max(1.0, count);
  return make_result({1}, {total / denom}, {pred, target}, [denom, w = std::move(w)](Node& self) {
    const auto& p = self.parents[0]->value;
    const auto& t = self.parents[1]->value;
    const double g0 = self.grad[0] / denom;
    for (std::size_t side = 0; side < 2; ++side) {
      Node& par = *self.parents[side];
      if (!par.requires_grad) continue;
      par.ensure_grad();
      const double sgn = side == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (w[i] == 0.0) continue;
        const double d = p[i] - t[i];
        par.grad[i] += sgn * g0 * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      }
    }
  });
}

Tensor kl_loss(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape()) throw ShapeError("kl_loss: mu/logvar shapes differ");
  const auto m = mu.data(), lv = logvar.data();
  const double n = static_cast<double>(m.size());
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) total += 0.5 * (m[i] * m[i] + std::exp(lv[i]) - 1.0 - lv[i]);
  return make_result({1}, {total / n}, {mu, logvar}, [n](Node& self) {
    const auto& m = self.parents[0]->value;
    const auto& lv = self.parents[1]->value;
    const double g0 = self.grad[0] / n;
    Node& pm = *self.parents[0];
    Node& pl = *self.parents[1];
    if (pm.requires_grad) {
      pm.ensure_grad();
      for (std::size_t i = 0; i < m.size(); ++i) pm.grad[i] += g0 * m[i];
    }
    if (pl.requires_grad) {
      pl.ensure_grad();
      for (std::size_t i = 0; i < lv.size(); ++i) pl.grad[i] += g0 * 0.5 * (std::exp(lv[i]) - 1.0);
    }
  });
}

Tensor hinge_generator_loss(const Tensor& fake_logits) { return scale(mean(fake_logits), -1.0); }

Tensor hinge_discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits) {
  return add(mean(relu(add_scalar(scale(real_logits, -1.0), 1.0))), mean(relu(add_scalar(fake_logits, 1.0))));
}

Tensor feature_matching_loss(const std::vector<Tensor>& real, const std::vector<Tensor>& fake) {
  if (real.size() != fake.size() || real.empty()) throw ShapeError("feature_matching_loss: layer count mismatch");
  Tensor total = pixel_loss(fake[0], real[0], false);
  for (std::size_t i = 1; i < real.size(); ++i) total = add(total, pixel_loss(fake[i], real[i], false));
  return scale(total, 1.0 / static_cast<double>(real.size()));
}

AdversarialLosses adversarial_losses(const Discriminator& disc, const Tensor& real, const Tensor& fake) {
  const DiscriminatorOutput on_real = disc.forward(real);
  const DiscriminatorOutput on_fake = disc.forward(fake);
  const DiscriminatorOutput on_fake_detached = disc.forward(fake.detach());
  std::vector<Tensor> real_feats;
  for (const auto& f : on_real.features) real_feats.push_back(f.detach());
  return {hinge_generator_loss(on_fake.logits),
          hinge_discriminator_loss(on_real.logits, on_fake_detached.logits),
          feature_matching_loss(real_feats, on_fake.features)};
}

Tensor perceptual_loss(const Tensor& pred, const Tensor& target, const FeatureExtractor& extractor) {
  if (pred.shape() != target.shape()) throw ShapeError("perceptual_loss: shapes differ");
  const auto fp = extractor.features(pred);
  std::vector<Tensor> ft;
  {
    NoGradGuard guard;
    ft = extractor.features(target);
  }
  Tensor total = pixel_loss(fp[0], ft[0], false);
  for (std::size_t i = 1; i < fp.size(); ++i) total = add(total, pixel_loss(fp[i], ft[i], false));
  return total;
}

Tensor colorful_loss(const Tensor& pred_ab, double c_ref) {
  if (pred_ab.rank() != 4 || pred_ab.dim(1) != 2) {
    throw ShapeError("colorful_loss: expected [N,2,H,W], got " + shape_str(pred_ab.shape()));
  }
  if (!(c_ref > 0.0)) throw ConfigError("colorful_loss: c_ref must be > 0");
  const auto N = pred_ab.dim(0);
  Tensor total;
  for (std::size_t n = 0; n < N; ++n) {
    const Tensor item = slice_batch(pred_ab, n);
    const Tensor a = select_channels(item, 0, 1);
    const Tensor b = select_channels(item, 1, 1);
    const Tensor mu_a = mean(a), mu_b = mean(b);
    const Tensor sd_a = sqrt(mean(square(add_broadcast(a, scale(mu_a, -1.0)))));
    const Tensor sd_b = sqrt(mean(square(add_broadcast(b, scale(mu_b, -1.0)))));
    const Tensor mean_norm = sqrt(add(square(mu_a), square(mu_b)));
    const Tensor stat = add(add(sd_a, sd_b), scale(mean_norm, 0.3));
    const Tensor loss = add_scalar(scale(clamp(scale(stat, 1.0 / c_ref), 0.0, 1.0), -1.0), 1.0);
    total = n == 0 ? loss : add(total, loss);
  }
  return scale(total, 1.0 / static_cast<double>(N));
}

}  // namespace previvor::nn
