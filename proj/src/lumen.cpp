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

#include "previvor/lumen.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "previvor/errors.hpp"
#include "previvor/nn/ops.hpp"

namespace previvor::lumen {

using nn::Tensor;

namespace {

constexpr double kL8Max = 255.0;
constexpr double kHalfRange = kL8Max / 2.0;

bool is_power_of_two(long v) { return v > 0 && (v & (v - 1)) == 0; }

Tensor to_l8_units(const Tensor& t) { return nn::scale(t, kHalfRange); }

}  // namespace

// ---------------------------------------------------------------- configs

void VaeConfig::validate() const {
  if (base_channels < 2) throw ConfigError("vae.base_channels must be >= 2");
  if (latent_channels < 1) throw ConfigError("vae.latent_channels must be >= 1");
  if (depth < 1 || depth > 6) throw ConfigError("vae.depth must be in [1, 6]");
}

nlohmann::json VaeConfig::to_json() const {
  return {{"base_channels", base_channels}, {"latent_channels", latent_channels}, {"depth", depth}};
}

VaeConfig VaeConfig::from_json(const nlohmann::json& j) {
  VaeConfig c;
  c.base_channels = j.at("base_channels").get<std::size_t>();
  c.latent_channels = j.at("latent_channels").get<std::size_t>();
  c.depth = j.at("depth").get<int>();
  c.validate();
  return c;
}

void MappingConfig::validate() const {
  if (blocks < 0) throw ConfigError("mapping.blocks must be >= 0");
  if (feature_dim < 1) throw ConfigError("mapping.feature_dim must be >= 1");
}

nlohmann::json MappingConfig::to_json() const { return {{"blocks", blocks}, {"feature_dim", feature_dim}}; }

MappingConfig MappingConfig::from_json(const nlohmann::json& j) {
  MappingConfig c;
  c.blocks = j.at("blocks").get<int>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.validate();
  return c;
}

// ---------------------------------------------------------------- VAE

template <class Domain>
Vae<Domain>::Vae(const VaeConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  std::size_t ch = 1;
  for (int i = 0; i < cfg.depth; ++i) {
    const std::size_t next = cfg.base_channels << i;
    down_.emplace_back(ch, next, 3, 2, 1, rng);
    ch = next;
  }
  mu_head_ = nn::Conv2d(ch, cfg.latent_channels, 1, 1, 0, rng);
  logvar_head_ = nn::Conv2d(ch, cfg.latent_channels, 1, 1, 0, rng);
  dec_in_ = nn::Conv2d(cfg.latent_channels, ch, 3, 1, 1, rng);
  for (int i = cfg.depth - 1; i >= 0; --i) {
    const std::size_t next = i > 0 ? cfg.base_channels << (i - 1) : std::max<std::size_t>(1, cfg.base_channels / 2);
    up_.emplace_back(ch, next, 3, 1, 1, rng);
    ch = next;
  }
  dec_out_ = nn::Conv2d(ch, 1, 3, 1, 1, rng);
}

template <class Domain>
std::pair<Tensor, Tensor> Vae<Domain>::encode_stats(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 1) throw ShapeError("Vae: expected [N,1,H,W] input, got " + nn::shape_str(x.shape()));
  const std::size_t f = std::size_t{1} << cfg_.depth;
  if (x.dim(2) % f != 0 || x.dim(3) % f != 0) {
    throw DimensionError("Vae: input " + nn::shape_str(x.shape()) + " is not divisible by " + std::to_string(f));
  }
  Tensor h = x;
  for (const auto& c : down_) h = nn::leaky_relu(c(h), nn::kLeakySlope);
  return {mu_head_(h), logvar_head_(h)};
}

template <class Domain>
Latent<Domain> Vae<Domain>::encode(const Tensor& x, Rng* noise) const {
  auto [mu, logvar] = encode_stats(x);
  if (!noise) return {mu};
  std::vector<double> eps(mu.numel());
  for (double& e : eps) e = noise->normal();
  return {nn::add(mu, nn::mul(nn::exp(nn::scale(logvar, 0.5)), Tensor::from(mu.shape(), std::move(eps))))};
}

template <class Domain>
Tensor Vae<Domain>::decode(const Latent<Domain>& latent) const {
  Tensor h = nn::leaky_relu(dec_in_(latent.z), nn::kLeakySlope);
  for (const auto& c : up_) h = nn::leaky_relu(c(nn::upsample2x(h)), nn::kLeakySlope);
  return nn::tanh(dec_out_(h));
}

template <class Domain>
VaeOutput<Domain> Vae<Domain>::forward(const Tensor& x, Rng* noise) const {
  VaeOutput<Domain> out;
  std::tie(out.mu, out.logvar) = encode_stats(x);
  if (noise) {
    std::vector<double> eps(out.mu.numel());
    for (double& e : eps) e = noise->normal();
    out.latent.z =
        nn::add(out.mu, nn::mul(nn::exp(nn::scale(out.logvar, 0.5)), Tensor::from(out.mu.shape(), std::move(eps))));
  } else {
    out.latent.z = out.mu;
  }
  out.reconstruction = decode(out.latent);
  return out;
}

template <class Domain>
nn::ParamList Vae<Domain>::parameters() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < down_.size(); ++i) down_[i].collect(out, "down" + std::to_string(i));
  mu_head_.collect(out, "mu");
  logvar_head_.collect(out, "logvar");
  dec_in_.collect(out, "dec_in");
  for (std::size_t i = 0; i < up_.size(); ++i) up_[i].collect(out, "up" + std::to_string(i));
  dec_out_.collect(out, "dec_out");
  return out;
}

template class Vae<DegradedDomain>;
template class Vae<CleanDomain>;

// ---------------------------------------------------------------- mapping

MappingNet::MappingNet(const MappingConfig& cfg, std::size_t latent_channels, Rng& rng)
    : cfg_(cfg),
      in_proj_(latent_channels, cfg.feature_dim, 1, 1, 0, rng),
      out_proj_(cfg.feature_dim, latent_channels, 1, 1, 0, rng, /*zero_init=*/true) {
  cfg_.validate();
  for (int i = 0; i < cfg.blocks; ++i) {
    blocks_.emplace_back(nn::Conv2d(cfg.feature_dim, cfg.feature_dim, 3, 1, 1, rng),
                         nn::Conv2d(cfg.feature_dim, cfg.feature_dim, 3, 1, 1, rng));
  }
}

Latent<CleanDomain> MappingNet::operator()(const Latent<DegradedDomain>& z) const {
  Tensor h = in_proj_(z.z);
  for (const auto& [a, b] : blocks_) h = nn::add(h, b(nn::leaky_relu(a(h), nn::kLeakySlope)));
  return {nn::add(z.z, out_proj_(nn::leaky_relu(h, nn::kLeakySlope)))};
}

nn::ParamList MappingNet::parameters() const {
  nn::ParamList out;
  in_proj_.collect(out, "in_proj");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].first.collect(out, "block" + std::to_string(i) + ".a");
    blocks_[i].second.collect(out, "block" + std::to_string(i) + ".b");
  }
  out_proj_.collect(out, "out_proj");
  return out;
}

// ---------------------------------------------------------------- model

namespace {

Rng seeded(std::uint64_t seed, std::uint64_t stream) { return Rng(mix_seed(seed, stream)); }

}  // namespace

LumenModel::LumenModel(int res, const VaeConfig& vae, const MappingConfig& map, std::uint64_t seed)
    : resolution(res),
      vae_cfg(vae),
      mapping_cfg(map),
      shared([&] { auto r = seeded(seed, 1); return SharedVae(vae, r); }()),
      clean([&] { auto r = seeded(seed, 2); return CleanVae(vae, r); }()),
      mapping([&] { auto r = seeded(seed, 3); return MappingNet(map, vae.latent_channels, r); }()) {}

nlohmann::json LumenModel::describe() const {
  return {{"resolution", resolution}, {"vae", vae_cfg.to_json()}, {"mapping", mapping_cfg.to_json()}};
}

void LumenModel::save_into(nn::Archive& ar) const {
  ar.meta["lumen_model"] = describe();
  ar.put_all(shared.parameters(), "model.shared.");
  ar.put_all(clean.parameters(), "model.clean.");
  ar.put_all(mapping.parameters(), "model.mapping.");
}

LumenModel LumenModel::from_archive(const nn::Archive& ar) {
  if (!ar.meta.contains("lumen_model")) throw StateError("checkpoint does not contain a luminance model");
  const auto& d = ar.meta["lumen_model"];
  LumenModel m(d.at("resolution").get<int>(), VaeConfig::from_json(d.at("vae")),
               MappingConfig::from_json(d.at("mapping")), 0);
  ar.load_into(m.shared.parameters(), "model.shared.");
  ar.load_into(m.clean.parameters(), "model.clean.");
  ar.load_into(m.mapping.parameters(), "model.mapping.");
  return m;
}

Tensor luminance_tensor(const std::vector<const Plane*>& planes) { return planes_to_tensor(planes, 0.0, kL8Max); }

nn::Tensor mapping_latent_loss(const Latent<CleanDomain>& mapped, const Latent<CleanDomain>& target) {
  if (mapped.z.shape() != target.z.shape()) {
    throw ShapeError("mapping_latent_loss: " + nn::shape_str(mapped.z.shape()) + " vs " + nn::shape_str(target.z.shape()));
  }
  return nn::mean(nn::abs(nn::sub(mapped.z, target.z)));
}

LuminancePlane restore_luminance(const LuminancePlane& degraded, const SharedVae& encoder, const MappingNet& mapping,
                                 const CleanVae& decoder) {
  if (degraded.domain() != LumDomain::real_degraded && degraded.domain() != LumDomain::synthetic_degraded) {
    throw StateError(std::string("restore_luminance: input must be degraded luminance, got ") +
                     to_string(degraded.domain()));
  }
  nn::NoGradGuard ng;
  const Tensor x = luminance_tensor({&degraded.values()});
  const Tensor y = decoder.decode(mapping(encoder.encode(x)));
  return LuminancePlane(clamp_plane(tensor_to_plane(y, 0, 0, 0.0, kL8Max), 0.0, kL8Max), LumDomain::restored);
}

LuminancePlane restore_luminance(const LuminancePlane& degraded, const LumenModel& model) {
  if (degraded.rows() != model.resolution || degraded.cols() != model.resolution) {
    throw DimensionError("restore_luminance: input is " + std::to_string(degraded.cols()) + "x" +
                         std::to_string(degraded.rows()) + " but the model was trained at " +
                         std::to_string(model.resolution) + "x" + std::to_string(model.resolution));
  }
  return restore_luminance(degraded, model.shared, model.mapping, model.clean);
}

// ---------------------------------------------------------------- training

void LumenTrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("lumen.batch_size must be >= 1");
  if (resolution < 32 || !is_power_of_two(resolution)) throw ConfigError("lumen.resolution must be a power of two >= 32");
  if (iterations < 0) throw ConfigError("lumen.iterations must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("lumen.checkpoint_every must be >= 1");
  if (!(empirical_probability >= 0.0 && empirical_probability <= 1.0)) {
    throw ConfigError("lumen.empirical_probability must be in [0, 1]");
  }
  if (curve_bins < 1) throw ConfigError("lumen.curve_bins must be >= 1");
  if (disc_layers < 2) throw ConfigError("lumen.disc_layers must be >= 2");
  vae.validate();
  mapping.validate();
  if (resolution % (1 << vae.depth) != 0) throw ConfigError("lumen.resolution must be divisible by 2^vae.depth");
  weights.validate();
  schedule.validate();
  linear_ranges.validate();
}

nlohmann::json LumenTrainConfig::to_json() const {
  return {{"resolution", resolution},
          {"batch_size", batch_size},
          {"iterations", iterations},
          {"vae", vae.to_json()},
          {"mapping", mapping.to_json()},
          {"weights", weights.to_json()},
          {"schedule", schedule.to_json()},
          {"adamw", adamw.to_json()},
          {"linear_ranges",
           {{"alpha", {linear_ranges.alpha_lo, linear_ranges.alpha_hi}},
            {"beta", {linear_ranges.beta_lo, linear_ranges.beta_hi}}}},
          {"empirical_probability", empirical_probability},
          {"fit_curve_from_pairs", fit_curve_from_pairs},
          {"curve_bins", curve_bins},
          {"disc_base", disc_base},
          {"disc_layers", disc_layers},
          {"latent_disc_hidden", latent_disc_hidden},
          {"flip_augment", flip_augment},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed}};
}

const char* to_string(LumenPhase p) noexcept {
  switch (p) {
    case LumenPhase::vae_shared: return "vae_shared";
    case LumenPhase::vae_clean: return "vae_clean";
    case LumenPhase::mapping: return "mapping";
    case LumenPhase::done: return "done";
  }
  return "unknown";
}

namespace {

LumenPhase phase_from_string(const std::string& s) {
  for (auto p : {LumenPhase::vae_shared, LumenPhase::vae_clean, LumenPhase::mapping, LumenPhase::done}) {
    if (s == to_string(p)) return p;
  }
  throw StateError("unknown luminance training phase '" + s + "'");
}


}  // namespace

struct LumenTrainer::State {
  LumenTrainConfig cfg;
  LumenData data;
  LumenModel model;
  DegradationSamplerConfig sampler;
  nn::PatchDiscriminator disc_shared, disc_clean, disc_mapping;
  nn::LatentDiscriminator disc_latent;
  nn::AdamW opt_shared, opt_clean, opt_mapping;
  nn::AdamW opt_disc_shared, opt_disc_clean, opt_disc_mapping, opt_disc_latent;
  Rng data_rng, noise_rng;
  LumenPhase phase = LumenPhase::vae_shared;
  std::int64_t step = 0;
  bool frozen = false;
  std::vector<IterationLog> history;

  static nn::PatchDiscriminator make_disc(const LumenTrainConfig& c, std::uint64_t stream) {
    Rng r(mix_seed(c.seed, stream));
    return nn::PatchDiscriminator(1, c.disc_base, c.disc_layers, r);
  }
  static nn::LatentDiscriminator make_latent_disc(const LumenTrainConfig& c) {
    Rng r(mix_seed(c.seed, 14));
    return nn::LatentDiscriminator(c.vae.latent_channels, c.latent_disc_hidden, r);
  }

  State(LumenTrainConfig c, LumenData d)
      : cfg(std::move(c)),
        data(std::move(d)),
        model(cfg.resolution, cfg.vae, cfg.mapping, cfg.seed),
        disc_shared(make_disc(cfg, 11)),
        disc_clean(make_disc(cfg, 12)),
        disc_mapping(make_disc(cfg, 13)),
        disc_latent(make_latent_disc(cfg)),
        opt_shared(model.shared.parameters(), cfg.adamw),
        opt_clean(model.clean.parameters(), cfg.adamw),
        opt_mapping(model.mapping.parameters(), cfg.adamw),
        opt_disc_shared(disc_shared.parameters(), cfg.adamw),
        opt_disc_clean(disc_clean.parameters(), cfg.adamw),
        opt_disc_mapping(disc_mapping.parameters(), cfg.adamw),
        opt_disc_latent(disc_latent.parameters(), cfg.adamw),
        data_rng(mix_seed(cfg.seed, 20)),
        noise_rng(mix_seed(cfg.seed, 21)) {}

  // Named optimizers in a fixed order, for checkpointing.
  std::vector<std::pair<std::string, nn::AdamW*>> optimizers() {
    return {{"shared", &opt_shared},           {"clean", &opt_clean},
            {"mapping", &opt_mapping},         {"disc_shared", &opt_disc_shared},
            {"disc_clean", &opt_disc_clean},   {"disc_mapping", &opt_disc_mapping},
            {"disc_latent", &opt_disc_latent}};
  }

  const Plane& pick_clean() { return data.non_degraded[data_rng.index(data.non_degraded.size())]; }

  Plane crop(const Plane& p) { return random_crop_group({&p}, cfg.resolution, cfg.flip_augment, data_rng)[0]; }

  Plane synthesize(const Plane& clean_crop) {
    return sample_degradation(LuminancePlane(clean_crop, LumDomain::non_degraded), sampler, data_rng).first.values();
  }

  void emit(IterationLog log, const LogSink& sink) {
    require_finite(log);
    if (sink) sink(log);
    history.push_back(std::move(log));
  }
};

LumenTrainer::LumenTrainer(LumenTrainConfig cfg, LumenData data) {
  cfg.validate();
  if (data.non_degraded.empty()) throw ConfigError("luminance training needs non-degraded images");
  s_ = std::make_unique<State>(std::move(cfg), std::move(data));
  auto& s = *s_;
  s.sampler.linear_ranges = s.cfg.linear_ranges;
  s.sampler.mode_probability = 0.0;
  if (s.cfg.fit_curve_from_pairs && !s.data.pairs.empty() && s.cfg.empirical_probability > 0.0) {
    std::vector<std::pair<LuminancePlane, LuminancePlane>> pairs;
    for (const auto& [deg, res] : s.data.pairs) {
      pairs.emplace_back(LuminancePlane(deg, LumDomain::real_degraded), LuminancePlane(res, LumDomain::restored));
    }
    s.sampler.curve_pool.push_back(fit_empirical_curve(pairs, s.cfg.curve_bins));
    s.sampler.mode_probability = s.cfg.empirical_probability;
  }
  s.sampler.validate();
}

LumenTrainer::~LumenTrainer() = default;
LumenTrainer::LumenTrainer(LumenTrainer&&) noexcept = default;
LumenTrainer& LumenTrainer::operator=(LumenTrainer&&) noexcept = default;

LumenPhase LumenTrainer::phase() const noexcept { return s_->phase; }
std::int64_t LumenTrainer::phase_step() const noexcept { return s_->step; }
const LumenModel& LumenTrainer::model() const noexcept { return s_->model; }
LumenModel& LumenTrainer::model() noexcept { return s_->model; }
const LumenTrainConfig& LumenTrainer::config() const noexcept { return s_->cfg; }
const DegradationSamplerConfig& LumenTrainer::sampler() const noexcept { return s_->sampler; }
const std::vector<IterationLog>& LumenTrainer::history() const noexcept { return s_->history; }

namespace {

void require_phase(LumenPhase actual, LumenPhase wanted) {
  if (actual != wanted) {
    throw StateError(std::string("luminance training is in phase ") + to_string(actual) + ", cannot run " +
                     to_string(wanted));
  }
}

}  // namespace

void LumenTrainer::train_vae_shared(const LogSink& sink, const CheckpointHook& hook) {
  auto& s = *s_;
  require_phase(s.phase, LumenPhase::vae_shared);
  if (s.data.real_degraded.empty()) throw ConfigError("shared VAE training needs real degraded images");
  const auto& w = s.cfg.weights;
  const auto B = static_cast<std::size_t>(s.cfg.batch_size);
  while (s.step < s.cfg.iterations) {
    // Equal shares of real and synthetic degraded luminance per batch.
    std::vector<Plane> batch;
    std::vector<std::size_t> real_idx, synth_idx;
    for (auto [pool, idx] : balanced_draw(B, s.data.real_degraded.size(), s.data.non_degraded.size(), s.data_rng)) {
      if (pool == 0) {
        real_idx.push_back(batch.size());
        batch.push_back(s.crop(s.data.real_degraded[idx]));
      } else {
        synth_idx.push_back(batch.size());
        batch.push_back(s.synthesize(s.crop(s.data.non_degraded[idx])));
      }
    }
    std::vector<const Plane*> ptrs;
    for (const auto& p : batch) ptrs.push_back(&p);
    const Tensor x = luminance_tensor(ptrs);

    const auto out = s.model.shared.forward(x, &s.noise_rng);
    const Tensor pixel = nn::pixel_loss(to_l8_units(out.reconstruction), to_l8_units(x), true);
    const auto adv = nn::adversarial_losses(s.disc_shared, x, out.reconstruction);
    const Tensor kl = nn::kl_loss(out.mu, out.logvar);

    auto gather = [&](const Tensor& t, const std::vector<std::size_t>& idx) {
      std::vector<Tensor> items;
      for (auto i : idx) items.push_back(nn::slice_batch(t, i));
      return nn::concat_batch(items);
    };
    Tensor latent_gen = Tensor::scalar(0.0), latent_disc = Tensor::scalar(0.0);
    if (!real_idx.empty() && !synth_idx.empty()) {
      // The encoder is rewarded when synthetic latents pass as real ones.
      const Tensor mu_real = gather(out.mu, real_idx), mu_synth = gather(out.mu, synth_idx);
      latent_gen = nn::hinge_generator_loss(s.disc_latent.forward(mu_synth).logits);
      latent_disc = nn::hinge_discriminator_loss(s.disc_latent.forward(mu_real.detach()).logits,
                                                 s.disc_latent.forward(mu_synth.detach()).logits);
    }

    const Tensor total = nn::add(
        nn::add(nn::add(nn::scale(pixel, w.lum_pixel), nn::scale(adv.generator, w.lum_adv)),
                nn::add(nn::scale(adv.feature_match, w.lum_feat), nn::scale(latent_gen, w.lum_latent_adv))),
        nn::scale(kl, w.kl));

    s.opt_shared.zero_grad();
    total.backward();
    s.opt_shared.step(s.cfg.schedule);

    s.opt_disc_shared.zero_grad();
    s.opt_disc_latent.zero_grad();
    const Tensor disc_total = nn::add(adv.discriminator, latent_disc);
    disc_total.backward();
    s.opt_disc_shared.step(s.cfg.schedule);
    s.opt_disc_latent.step(s.cfg.schedule);

    IterationLog log;
    log.phase = "vae_shared";
    log.iteration = s.step;
    log.lr = s.cfg.schedule.lr_at(s.step);
    log.terms = {{"pixel", w.lum_pixel * pixel.item()},
                 {"adv", w.lum_adv * adv.generator.item()},
                 {"feat", w.lum_feat * adv.feature_match.item()},
                 {"latent_adv", w.lum_latent_adv * latent_gen.item()},
                 {"kl", w.kl * kl.item()}};
    log.total = total.item();
    log.disc = disc_total.item();
    s.emit(std::move(log), sink);
    ++s.step;
    if (hook && s.step % s.cfg.checkpoint_every == 0) hook(*this);
  }
  s.phase = LumenPhase::vae_clean;
  s.step = 0;
}

void LumenTrainer::train_vae_clean(const LogSink& sink, const CheckpointHook& hook) {
  auto& s = *s_;
  require_phase(s.phase, LumenPhase::vae_clean);
  const auto& w = s.cfg.weights;
  while (s.step < s.cfg.iterations) {
    std::vector<Plane> batch;
    for (int i = 0; i < s.cfg.batch_size; ++i) batch.push_back(s.crop(s.pick_clean()));
    std::vector<const Plane*> ptrs;
    for (const auto& p : batch) ptrs.push_back(&p);
    const Tensor x = luminance_tensor(ptrs);

    const auto out = s.model.clean.forward(x, &s.noise_rng);
    const Tensor pixel = nn::pixel_loss(to_l8_units(out.reconstruction), to_l8_units(x), true);
    const auto adv = nn::adversarial_losses(s.disc_clean, x, out.reconstruction);
    const Tensor kl = nn::kl_loss(out.mu, out.logvar);
    const Tensor total =
        nn::add(nn::add(nn::scale(pixel, w.lum_pixel), nn::scale(adv.generator, w.lum_adv)),
                nn::add(nn::scale(adv.feature_match, w.lum_feat), nn::scale(kl, w.kl)));

    s.opt_clean.zero_grad();
    total.backward();
    s.opt_clean.step(s.cfg.schedule);
    s.opt_disc_clean.zero_grad();
    adv.discriminator.backward();
    s.opt_disc_clean.step(s.cfg.schedule);

    IterationLog log;
    log.phase = "vae_clean";
    log.iteration = s.step;
    log.lr = s.cfg.schedule.lr_at(s.step);
    log.terms = {{"pixel", w.lum_pixel * pixel.item()},
                 {"adv", w.lum_adv * adv.generator.item()},
                 {"feat", w.lum_feat * adv.feature_match.item()},
                 {"kl", w.kl * kl.item()}};
    log.total = total.item();
    log.disc = adv.discriminator.item();
    s.emit(std::move(log), sink);
    ++s.step;
    if (hook && s.step % s.cfg.checkpoint_every == 0) hook(*this);
  }
  s.phase = LumenPhase::mapping;
  s.step = 0;
  freeze_vaes();
}

void LumenTrainer::freeze_vaes() {
  nn::set_requires_grad(s_->model.shared.parameters(), false);
  nn::set_requires_grad(s_->model.clean.parameters(), false);
  s_->frozen = true;
}

void LumenTrainer::train_mapping(const LogSink& sink, const CheckpointHook& hook) {
  auto& s = *s_;
  for (const auto& p : s.model.shared.parameters()) {
    if (p.tensor.requires_grad()) throw StateError("train_mapping: shared VAE parameter '" + p.name + "' is not frozen");
  }
  for (const auto& p : s.model.clean.parameters()) {
    if (p.tensor.requires_grad()) throw StateError("train_mapping: clean VAE parameter '" + p.name + "' is not frozen");
  }
  require_phase(s.phase, LumenPhase::mapping);
  const auto& w = s.cfg.weights;
  while (s.step < s.cfg.iterations) {
    // Synthetic pairs give a pixel-aligned clean target for every input.
    std::vector<Plane> clean, degraded;
    for (int i = 0; i < s.cfg.batch_size; ++i) {
      clean.push_back(s.crop(s.pick_clean()));
      degraded.push_back(s.synthesize(clean.back()));
    }
    std::vector<const Plane*> cp, dp;
    for (int i = 0; i < s.cfg.batch_size; ++i) {
      cp.push_back(&clean[static_cast<std::size_t>(i)]);
      dp.push_back(&degraded[static_cast<std::size_t>(i)]);
    }
    const Tensor x_clean = luminance_tensor(cp), x_deg = luminance_tensor(dp);

    const Latent<DegradedDomain> z_deg = s.model.shared.encode(x_deg);
    const Latent<CleanDomain> z_target = s.model.clean.encode(x_clean);
    const Latent<CleanDomain> mapped = s.model.mapping(z_deg);
    const Tensor y = s.model.clean.decode(mapped);

    const Tensor pixel = nn::pixel_loss(to_l8_units(y), to_l8_units(x_clean), true);
    const auto adv = nn::adversarial_losses(s.disc_mapping, x_clean, y);
    const Tensor latent_l1 = mapping_latent_loss(mapped, z_target);
    const Tensor total =
        nn::add(nn::add(nn::scale(pixel, w.lum_pixel), nn::scale(adv.generator, w.lum_adv)),
                nn::add(nn::scale(adv.feature_match, w.lum_feat), nn::scale(latent_l1, w.latent_l1)));

    s.opt_mapping.zero_grad();
    total.backward();
    s.opt_mapping.step(s.cfg.schedule);
    s.opt_disc_mapping.zero_grad();
    adv.discriminator.backward();
    s.opt_disc_mapping.step(s.cfg.schedule);

    IterationLog log;
    log.phase = "mapping";
    log.iteration = s.step;
    log.lr = s.cfg.schedule.lr_at(s.step);
    log.terms = {{"pixel", w.lum_pixel * pixel.item()},
                 {"adv", w.lum_adv * adv.generator.item()},
                 {"feat", w.lum_feat * adv.feature_match.item()},
                 {"latent_l1", w.latent_l1 * latent_l1.item()}};
    log.total = total.item();
    log.disc = adv.discriminator.item();
    s.emit(std::move(log), sink);
    ++s.step;
    if (hook && s.step % s.cfg.checkpoint_every == 0) hook(*this);
  }
  s.phase = LumenPhase::done;
  s.step = 0;
}

void LumenTrainer::run(const LogSink& sink, const CheckpointHook& hook) {
  if (s_->phase == LumenPhase::vae_shared) train_vae_shared(sink, hook);
  if (s_->phase == LumenPhase::vae_clean) train_vae_clean(sink, hook);
  if (s_->phase == LumenPhase::mapping) train_mapping(sink, hook);
  if (hook) hook(*this);
}

double LumenTrainer::latent_accuracy(const std::vector<Plane>& real_degraded,
                                     const std::vector<Plane>& synthetic) const {
  nn::NoGradGuard ng;
  std::size_t correct = 0, total = 0;
  auto score = [&](const std::vector<Plane>& planes, bool positive) {
    for (const auto& p : planes) {
      const Tensor mu = s_->model.shared.encode_stats(luminance_tensor({&p})).first;
      for (double v : s_->disc_latent.forward(mu).logits.data()) {
        correct += (v > 0.0) == positive ? 1 : 0;
        ++total;
      }
    }
  };
  score(real_degraded, true);
  score(synthetic, false);
  if (total == 0) throw EmptyInputError("latent_accuracy: no inputs");
  return static_cast<double>(correct) / static_cast<double>(total);
}

nn::Archive LumenTrainer::to_archive() const {
  auto& s = *s_;
  nn::Archive ar;
  s.model.save_into(ar);
  ar.put_all(s.disc_shared.parameters(), "disc.shared.");
  ar.put_all(s.disc_clean.parameters(), "disc.clean.");
  ar.put_all(s.disc_mapping.parameters(), "disc.mapping.");
  ar.put_all(s.disc_latent.parameters(), "disc.latent.");
  nlohmann::json steps = nlohmann::json::object();
  for (auto& [name, opt] : s.optimizers()) {
    ar.put_all(opt->state_tensors(), "opt." + name + ".");
    steps[name] = opt->step_count();
  }
  ar.meta["kind"] = "lumen";
  ar.meta["config"] = s.cfg.to_json();
  ar.meta["phase"] = to_string(s.phase);
  ar.meta["step_count"] = s.step;
  ar.meta["optimizer_steps"] = steps;
  ar.meta["rng"] = {{"data", s.data_rng.serialize()}, {"noise", s.noise_rng.serialize()}};
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : s.sampler.curve_pool) curves.push_back(c.to_json());
  ar.meta["curve_pool"] = curves;
  for (const auto& [k, v] : extra_meta.items()) ar.meta[k] = v;
  return ar;
}

void LumenTrainer::resume_from(const nn::Archive& ar) {
  auto& s = *s_;
  if (ar.meta.value("kind", "") != "lumen") throw StateError("not a luminance training checkpoint");
  if (ar.meta.at("config") != s.cfg.to_json()) {
    throw ConfigError("checkpoint was written with a different luminance training config");
  }
  ar.load_into(s.model.shared.parameters(), "model.shared.");
  ar.load_into(s.model.clean.parameters(), "model.clean.");
  ar.load_into(s.model.mapping.parameters(), "model.mapping.");
  ar.load_into(s.disc_shared.parameters(), "disc.shared.");
  ar.load_into(s.disc_clean.parameters(), "disc.clean.");
  ar.load_into(s.disc_mapping.parameters(), "disc.mapping.");
  ar.load_into(s.disc_latent.parameters(), "disc.latent.");
  for (auto& [name, opt] : s.optimizers()) {
    opt->restore(ar.meta.at("optimizer_steps").at(name).get<std::int64_t>(), ar.with_prefix("opt." + name + "."));
  }
  s.phase = phase_from_string(ar.meta.at("phase").get<std::string>());
  s.step = ar.meta.at("step_count").get<std::int64_t>();
  s.data_rng.deserialize(ar.meta.at("rng").at("data").get<std::string>());
  s.noise_rng.deserialize(ar.meta.at("rng").at("noise").get<std::string>());
  s.sampler.curve_pool.clear();
  for (const auto& c : ar.meta.at("curve_pool")) s.sampler.curve_pool.push_back(EmpiricalCurve::from_json(c));
  if (s.phase == LumenPhase::mapping || s.phase == LumenPhase::done) freeze_vaes();
}

}  // namespace previvor::lumen
