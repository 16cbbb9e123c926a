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

#include "previvor/huecorr.hpp"

#include <chrono>
#include <cmath>

#include "previvor/degrade.hpp"
#include "previvor/errors.hpp"
#include "previvor/nn/ops.hpp"

namespace previvor::hue {

using nn::Tensor;

namespace {

constexpr double kChromaScale = 128.0;
constexpr double kOutputScale = 127.0;

const char* to_string(SubLayer s) {
  switch (s) {
    case SubLayer::cross_attention: return "cross_attention";
    case SubLayer::self_attention: return "self_attention";
    case SubLayer::mlp: return "mlp";
  }
  return "unknown";
}

SubLayer sublayer_from_string(const std::string& s) {
  for (auto v : {SubLayer::cross_attention, SubLayer::self_attention, SubLayer::mlp}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown decoder sub-layer '" + s + "'");
}

Tensor lrelu(const Tensor& t) { return nn::leaky_relu(t, nn::kLeakySlope); }

}  // namespace

// ---------------------------------------------------------------- config

HueConfig HueConfig::large() {
  HueConfig c;
  c.queries = 100;
  c.dim = 256;
  c.blocks = 9;
  c.heads = 8;
  c.mlp_hidden = 1024;
  c.encoder_channels = {64, 128, 256, 512};
  return c;
}

void HueConfig::validate() const {
  if (queries < 1) throw ConfigError("hue.queries must be >= 1");
  if (dim < 2) throw ConfigError("hue.dim must be >= 2");
  if (heads < 1 || dim % heads != 0) throw ConfigError("hue.dim must be divisible by hue.heads");
  if (blocks < 0) throw ConfigError("hue.blocks must be >= 0");
  if (mlp_hidden < 1) throw ConfigError("hue.mlp_hidden must be >= 1");
  for (auto c : encoder_channels) {
    if (c < 1) throw ConfigError("hue.encoder_channels must be positive");
  }
  if (block_order.empty()) throw ConfigError("hue.block_order must not be empty");
}

nlohmann::json HueConfig::to_json() const {
  nlohmann::json order = nlohmann::json::array();
  for (auto s : block_order) order.push_back(to_string(s));
  return {{"queries", queries},         {"dim", dim},
          {"blocks", blocks},           {"heads", heads},
          {"mlp_hidden", mlp_hidden},   {"encoder_channels", encoder_channels},
          {"block_order", order}};
}

HueConfig HueConfig::from_json(const nlohmann::json& j) {
  HueConfig c;
  c.queries = j.at("queries").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.blocks = j.at("blocks").get<int>();
  c.heads = j.at("heads").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.encoder_channels = j.at("encoder_channels").get<std::array<std::size_t, 4>>();
  c.block_order.clear();
  for (const auto& s : j.at("block_order")) c.block_order.push_back(sublayer_from_string(s.get<std::string>()));
  c.validate();
  return c;
}

// ---------------------------------------------------------------- network

HueNet::HueNet(const HueConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(seed, 31));
  const auto& ec = cfg.encoder_channels;
  const std::size_t d = cfg.dim, half = std::max<std::size_t>(1, d / 2);
  std::size_t ch = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    enc_down_[i] = nn::Conv2d(ch, ec[i], 3, 2, 1, rng);
    enc_mix_[i] = nn::Conv2d(ec[i], ec[i], 3, 1, 1, rng);
    ch = ec[i];
  }
  proj_[0] = nn::Conv2d(ec[3], d, 1, 1, 0, rng);
  lateral_[0] = nn::Conv2d(ec[2], d, 1, 1, 0, rng);
  proj_[1] = nn::Conv2d(d, d, 3, 1, 1, rng);
  lateral_[1] = nn::Conv2d(ec[1], d, 1, 1, 0, rng);
  proj_[2] = nn::Conv2d(d, d, 3, 1, 1, rng);
  up_half_ = nn::Conv2d(d + ec[0], half, 3, 1, 1, rng);
  up_full_ = nn::Conv2d(half + 3, half, 3, 1, 1, rng);
  embed_ = nn::Conv2d(half, d, 1, 1, 0, rng);

  std::vector<double> q(cfg.queries * d);
  for (double& v : q) v = rng.uniform(-1.0, 1.0);
  queries_ = Tensor::from({cfg.queries, d}, std::move(q), true);
  for (int b = 0; b < cfg.blocks; ++b) {
    blocks_.push_back(Block{nn::LayerNorm(d), nn::LayerNorm(d), nn::LayerNorm(d), nn::MultiHeadAttention(d, cfg.heads, rng),
                            nn::MultiHeadAttention(d, cfg.heads, rng), nn::Mlp(d, cfg.mlp_hidden, rng)});
  }
  query_norm_ = nn::LayerNorm(d);
  fusion_ = nn::Linear(cfg.queries, 2, rng);
}

FeatureSet HueNet::encode_features(const Tensor& input) const {
  if (input.rank() != 4 || input.dim(1) != 3) {
    throw ShapeError("hue encoder expects [N,3,H,W] (L, a, b) input, got " + nn::shape_str(input.shape()));
  }
  if (input.dim(2) % 16 != 0 || input.dim(3) % 16 != 0) {
    throw DimensionError("hue encoder input " + nn::shape_str(input.shape()) + " must be a multiple of 16");
  }
  std::array<Tensor, 4> e;
  Tensor h = input;
  for (std::size_t i = 0; i < 4; ++i) {
    h = lrelu(enc_mix_[i](lrelu(enc_down_[i](h))));
    e[i] = h;
  }
  FeatureSet f;
  const Tensor f16 = proj_[0](e[3]);
  const Tensor f8 = lrelu(proj_[1](nn::add(nn::upsample2x(f16), lateral_[0](e[2]))));
  const Tensor f4 = lrelu(proj_[2](nn::add(nn::upsample2x(f8), lateral_[1](e[1]))));
  f.scales = {f16, f8, f4};
  const Tensor h2 = lrelu(up_half_(nn::concat_channels({nn::upsample2x(f4), e[0]})));
  const Tensor h1 = lrelu(up_full_(nn::concat_channels({nn::upsample2x(h2), input})));
  f.pixel_embedding = embed_(h1);
  return f;
}

Tensor HueNet::decode_colors(const FeatureSet& features, DecodeTrace* trace) const {
  const std::size_t N = features.pixel_embedding.dim(0);
  Tensor q = nn::repeat_batch(queries_, N);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    const Tensor memory = nn::nchw_to_tokens(features.scales[b % features.scales.size()]);
    for (SubLayer s : cfg_.block_order) {
      switch (s) {
        case SubLayer::cross_attention:
          q = nn::add(q, blk.cross(blk.norm_cross(q), memory, trace ? &trace->cross_weights : nullptr));
          break;
        case SubLayer::self_attention: {
          const Tensor n = blk.norm_self(q);
          q = nn::add(q, blk.self(n, n, trace ? &trace->self_weights : nullptr));
          break;
        }
        case SubLayer::mlp:
          q = nn::add(q, blk.mlp(blk.norm_mlp(q)));
          break;
      }
    }
  }
  return query_norm_(q);
}

Tensor HueNet::fuse(const FeatureSet& features, const Tensor& queries) const {
  const Tensor& emb = features.pixel_embedding;
  const std::size_t H = emb.dim(2), W = emb.dim(3);
  const Tensor tokens = nn::nchw_to_tokens(emb);  // [N, HW, d]
  const Tensor scores = nn::scale(nn::bmm(tokens, nn::transpose_last2(queries)),
                                  1.0 / std::sqrt(static_cast<double>(cfg_.dim)));  // [N, HW, K]
  const Tensor ab = nn::scale(nn::tanh(fusion_(scores)), kOutputScale);          // [N, HW, 2]
  return nn::tokens_to_nchw(ab, H, W);
}

Tensor HueNet::forward(const Tensor& input, DecodeTrace* trace) const {
  const FeatureSet f = encode_features(input);
  return fuse(f, decode_colors(f, trace));
}

nn::ParamList HueNet::parameters() const {
  nn::ParamList out;
  for (std::size_t i = 0; i < 4; ++i) {
    enc_down_[i].collect(out, "enc" + std::to_string(i) + ".down");
    enc_mix_[i].collect(out, "enc" + std::to_string(i) + ".mix");
  }
  for (std::size_t i = 0; i < 3; ++i) proj_[i].collect(out, "pix.proj" + std::to_string(i));
  for (std::size_t i = 0; i < 2; ++i) lateral_[i].collect(out, "pix.lateral" + std::to_string(i));
  up_half_.collect(out, "pix.up_half");
  up_full_.collect(out, "pix.up_full");
  embed_.collect(out, "pix.embed");
  out.push_back({"color_queries", queries_});
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = "block" + std::to_string(b);
    blocks_[b].norm_cross.collect(out, p + ".norm_cross");
    blocks_[b].cross.collect(out, p + ".cross");
    blocks_[b].norm_self.collect(out, p + ".norm_self");
    blocks_[b].self.collect(out, p + ".self");
    blocks_[b].norm_mlp.collect(out, p + ".norm_mlp");
    blocks_[b].mlp.collect(out, p + ".mlp");
  }
  query_norm_.collect(out, "query_norm");
  fusion_.collect(out, "fusion");
  return out;
}

// ---------------------------------------------------------------- inference

Tensor hue_input(const std::vector<const Plane*>& lab_L, const std::vector<const ChromaPlanes*>& priors,
                 const std::vector<const PriorMask*>& masks) {
  if (lab_L.empty() || lab_L.size() != priors.size() || lab_L.size() != masks.size()) {
    throw DimensionError("hue_input: need one luminance, prior and mask per item");
  }
  const int H = lab_L[0]->rows(), W = lab_L[0]->cols();
  const std::size_t hw = static_cast<std::size_t>(H) * static_cast<std::size_t>(W);
  std::vector<double> v(lab_L.size() * 3 * hw);
  for (std::size_t n = 0; n < lab_L.size(); ++n) {
    const Plane& L = *lab_L[n];
    const ChromaPlanes& p = *priors[n];
    const PriorMask& m = *masks[n];
    if (L.rows() != H || L.cols() != W || p.rows() != H || p.cols() != W || m.rows() != H || m.cols() != W) {
      throw DimensionError("hue_input: luminance, prior and mask dimensions disagree");
    }
    double* dst = v.data() + n * 3 * hw;
    const auto lv = L.values(), av = p.a().values(), bv = p.b().values();
    const auto mv = m.values();
    for (std::size_t i = 0; i < hw; ++i) {
      dst[i] = lv[i] / 100.0;
      dst[hw + i] = mv[i] ? av[i] / kChromaScale : 0.0;
      dst[2 * hw + i] = mv[i] ? bv[i] / kChromaScale : 0.0;
    }
  }
  return Tensor::from({lab_L.size(), 3, static_cast<std::size_t>(H), static_cast<std::size_t>(W)}, std::move(v));
}

ChromaPlanes correct_hue(const LuminancePlane& L_hat, const ChromaPlanes& prior, const PriorMask& mask,
                         const HueNet& net) {
  if (L_hat.rows() != prior.rows() || L_hat.cols() != prior.cols() || L_hat.rows() != mask.rows() ||
      L_hat.cols() != mask.cols()) {
    throw DimensionError("correct_hue: luminance " + std::to_string(L_hat.cols()) + "x" +
                         std::to_string(L_hat.rows()) + ", prior " + std::to_string(prior.cols()) + "x" +
                         std::to_string(prior.rows()) + " and mask " + std::to_string(mask.cols()) + "x" +
                         std::to_string(mask.rows()) + " disagree");
  }
  nn::NoGradGuard ng;
  const Plane lab_L = luminance_to_lab_l(L_hat);
  const Tensor ab = net.forward(hue_input({&lab_L}, {&prior}, {&mask}));
  const int H = L_hat.rows(), W = L_hat.cols();
  Plane a(H, W), b(H, W);
  const std::size_t hw = static_cast<std::size_t>(H) * static_cast<std::size_t>(W);
  std::copy_n(ab.data().begin(), hw, a.values().begin());
  std::copy_n(ab.data().begin() + static_cast<long>(hw), hw, b.values().begin());
  return ChromaPlanes(clamp_plane(a, kChromaMin, kChromaMax), clamp_plane(b, kChromaMin, kChromaMax));
}

// ---------------------------------------------------------------- samples

HueSample make_hue_training_pair(const LabImage& clean, const PriorConfig& prior_cfg,
                                 const AttenuationParams& attenuation) {
  const PriorExtraction ex = extract_color_prior(clean, prior_cfg, std::nullopt, SilkFallback::fail);
  const ChromaPlanes faded = attenuate_chroma(ex.prior, attenuation);
  HueSample s{LabImage(clean.L(), faded.a(), faded.b()), chroma_of(clean), ex.mask, ex.silk.c_silk};
  return s;
}

HueSample make_hue_training_pair(const LabImage& clean, const PriorConfig& prior_cfg, Rng& atten_rng) {
  return make_hue_training_pair(clean, prior_cfg, AttenuationParams::sample(atten_rng));
}

// ---------------------------------------------------------------- training

void HueTrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("hue.batch_size must be >= 1");
  if (resolution < 16 || resolution % 16 != 0) throw ConfigError("hue.resolution must be a positive multiple of 16");
  if (iterations < 0) throw ConfigError("hue.iterations must be >= 0");
  if (checkpoint_every < 1) throw ConfigError("hue.checkpoint_every must be >= 1");
  if (!(colorful_ref > 0.0)) throw ConfigError("hue.colorful_ref must be > 0");
  if (disc_layers < 2) throw ConfigError("hue.disc_layers must be >= 2");
  net.validate();
  weights.validate();
  schedule.validate();
  prior.validate();
}

nlohmann::json HueTrainConfig::to_json() const {
  return {{"resolution", resolution},
          {"batch_size", batch_size},
          {"iterations", iterations},
          {"net", net.to_json()},
          {"weights", weights.to_json()},
          {"schedule", schedule.to_json()},
          {"adamw", adamw.to_json()},
          {"prior", prior.to_json()},
          {"colorful_ref", colorful_ref},
          {"perceptual_seed", perceptual_seed},
          {"disc_base", disc_base},
          {"disc_layers", disc_layers},
          {"luminance_source", luminance_source == LuminanceSource::restored ? "restored" : "non_degraded"},
          {"flip_augment", flip_augment},
          {"checkpoint_every", checkpoint_every},
          {"seed", seed}};
}

struct HueTrainer::State {
  HueTrainConfig cfg;
  std::vector<LabImage> clean;
  std::shared_ptr<const lumen::LumenModel> lumen;
  HueNet net;
  nn::PatchDiscriminator disc;
  nn::RandomConvPyramid extractor;
  nn::AdamW opt_g, opt_d;
  Rng data_rng, atten_rng;
  std::int64_t step = 0;
  std::size_t skipped = 0;
  std::vector<IterationLog> history;

  static nn::PatchDiscriminator make_disc(const HueTrainConfig& c) {
    Rng r(mix_seed(c.seed, 41));
    return nn::PatchDiscriminator(3, c.disc_base, c.disc_layers, r);
  }

  State(HueTrainConfig c, std::vector<LabImage> images, std::shared_ptr<const lumen::LumenModel> lm)
      : cfg(std::move(c)),
        clean(std::move(images)),
        lumen(std::move(lm)),
        net(cfg.net, cfg.seed),
        disc(make_disc(cfg)),
        extractor(3, cfg.perceptual_seed),
        opt_g(net.parameters(), cfg.adamw),
        opt_d(disc.parameters(), cfg.adamw),
        data_rng(mix_seed(cfg.seed, 42)),
        atten_rng(mix_seed(cfg.seed, 43)) {}

  LabImage crop(const LabImage& img) {
    auto planes = random_crop_group({&img.L(), &img.a(), &img.b()}, cfg.resolution, cfg.flip_augment, data_rng);
    return LabImage(std::move(planes[0]), std::move(planes[1]), std::move(planes[2]));
  }

  // Draws one usable sample, skipping images whose silk colour cannot be
  // estimated.
  HueSample draw() {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const LabImage img = crop(clean[data_rng.index(clean.size())]);
      try {
        HueSample s = make_hue_training_pair(img, cfg.prior, atten_rng);
        if (cfg.luminance_source == LuminanceSource::restored) {
          const auto lin = cfg_linear().sample(data_rng);
          const auto degraded = apply_linear_degradation(luminance_8bit(img, LumDomain::non_degraded), lin);
          const Plane L = luminance_to_lab_l(lumen::restore_luminance(degraded, *lumen));
          s.input = LabImage(L, s.input.a(), s.input.b());
        }
        return s;
      } catch (const NoSilkFoundError&) {
        ++skipped;
      }
    }
    throw StateError("hue training: no image with an estimable silk colour after 1000 draws");
  }

  static LinearRanges cfg_linear() { return LinearRanges{}; }
};

HueTrainer::HueTrainer(HueTrainConfig cfg, std::vector<LabImage> clean, std::shared_ptr<const lumen::LumenModel> lumen) {
  cfg.validate();
  if (clean.empty()) throw ConfigError("hue training needs non-degraded images");
  if (cfg.luminance_source == LuminanceSource::restored && !lumen) {
    throw ConfigError("hue training with restored luminance needs a luminance checkpoint");
  }
  s_ = std::make_unique<State>(std::move(cfg), std::move(clean), std::move(lumen));
}

HueTrainer::~HueTrainer() = default;
HueTrainer::HueTrainer(HueTrainer&&) noexcept = default;
HueTrainer& HueTrainer::operator=(HueTrainer&&) noexcept = default;

std::int64_t HueTrainer::step() const noexcept { return s_->step; }
std::size_t HueTrainer::skipped_samples() const noexcept { return s_->skipped; }
const HueNet& HueTrainer::net() const noexcept { return s_->net; }
const HueTrainConfig& HueTrainer::config() const noexcept { return s_->cfg; }
const std::vector<IterationLog>& HueTrainer::history() const noexcept { return s_->history; }

void HueTrainer::train(const LogSink& sink, const CheckpointHook& hook) {
  auto& s = *s_;
  const auto& w = s.cfg.weights;
  while (s.step < s.cfg.iterations) {
    std::vector<HueSample> batch;
    for (int i = 0; i < s.cfg.batch_size; ++i) batch.push_back(s.draw());
    std::vector<const Plane*> Ls;
    std::vector<const ChromaPlanes*> priors;
    std::vector<const PriorMask*> masks;
    std::vector<ChromaPlanes> prior_store;
    prior_store.reserve(batch.size());
    for (const auto& b : batch) prior_store.push_back(chroma_of(b.input));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Ls.push_back(&batch[i].input.L());
      priors.push_back(&prior_store[i]);
      masks.push_back(&batch[i].mask);
    }
    const Tensor input = hue_input(Ls, priors, masks);
    const std::size_t N = batch.size(), H = input.dim(2), W = input.dim(3), hw = H * W;
    std::vector<double> tv(N * 2 * hw), mv(N * hw);
    for (std::size_t n = 0; n < N; ++n) {
      std::copy_n(batch[n].target.a().values().begin(), hw, tv.begin() + static_cast<long>(n * 2 * hw));
      std::copy_n(batch[n].target.b().values().begin(), hw, tv.begin() + static_cast<long>(n * 2 * hw + hw));
      const auto m = batch[n].mask.values();
      for (std::size_t i = 0; i < hw; ++i) mv[n * hw + i] = m[i] ? 1.0 : 0.0;
    }
    const Tensor target = Tensor::from({N, 2, H, W}, std::move(tv));
    const Tensor mask = Tensor::from({N, 1, H, W}, std::move(mv));

    const Tensor pred = s.net.forward(input);
    const Tensor L = nn::select_channels(input, 0, 1);
    const Tensor fake = nn::concat_channels({L, nn::scale(pred, 1.0 / kChromaScale)});
    const Tensor real = nn::concat_channels({L, nn::scale(target, 1.0 / kChromaScale)});

    const Tensor pixel = nn::pixel_loss(pred, target, false);
    const Tensor masked = nn::masked_pixel_loss(pred, target, mask);
    const Tensor per = nn::perceptual_loss(fake, real, s.extractor);
    const auto adv = nn::adversarial_losses(s.disc, real, fake);
    const Tensor col = nn::colorful_loss(pred, s.cfg.colorful_ref);
    const Tensor total = nn::add(nn::add(nn::add(nn::scale(pixel, w.pix), nn::scale(masked, w.mask)),
                                         nn::add(nn::scale(per, w.per), nn::scale(adv.generator, w.adv))),
                                 nn::scale(col, w.col));

    s.opt_g.zero_grad();
    total.backward();
    s.opt_g.step(s.cfg.schedule);
    s.opt_d.zero_grad();
    adv.discriminator.backward();
    s.opt_d.step(s.cfg.schedule);

    IterationLog log;
    log.phase = "hue";
    log.iteration = s.step;
    log.lr = s.cfg.schedule.lr_at(s.step);
    log.terms = {{"pixel", w.pix * pixel.item()},
                 {"mask", w.mask * masked.item()},
                 {"per", w.per * per.item()},
                 {"adv", w.adv * adv.generator.item()},
                 {"col", w.col * col.item()}};
    log.total = total.item();
    log.disc = adv.discriminator.item();
    require_finite(log);
    if (sink) sink(log);
    s.history.push_back(std::move(log));
    ++s.step;
    if (hook && s.step % s.cfg.checkpoint_every == 0) hook(*this);
  }
}

nn::Archive HueTrainer::to_archive() const {
  auto& s = *s_;
  nn::Archive ar;
  ar.meta["kind"] = "hue";
  ar.meta["config"] = s.cfg.to_json();
  ar.meta["hue_model"] = {{"resolution", s.cfg.resolution}, {"net", s.cfg.net.to_json()},
                          {"encoder", kEncoderIdentity}, {"seed", s.cfg.seed}};
  ar.meta["step_count"] = s.step;
  ar.meta["skipped_samples"] = s.skipped;
  ar.meta["optimizer_steps"] = {{"g", s.opt_g.step_count()}, {"d", s.opt_d.step_count()}};
  ar.meta["rng"] = {{"data", s.data_rng.serialize()}, {"atten", s.atten_rng.serialize()}};
  ar.meta["perceptual_extractor"] = s.extractor.identity();
  for (const auto& [k, v] : extra_meta.items()) ar.meta[k] = v;
  ar.put_all(s.net.parameters(), "model.hue.");
  ar.put_all(s.disc.parameters(), "disc.");
  ar.put_all(s.opt_g.state_tensors(), "opt.g.");
  ar.put_all(s.opt_d.state_tensors(), "opt.d.");
  return ar;
}

void HueTrainer::resume_from(const nn::Archive& ar) {
  auto& s = *s_;
  if (ar.meta.value("kind", "") != "hue") throw StateError("not a hue training checkpoint");
  if (ar.meta.at("config") != s.cfg.to_json()) throw ConfigError("checkpoint was written with a different hue config");
  ar.load_into(s.net.parameters(), "model.hue.");
  ar.load_into(s.disc.parameters(), "disc.");
  s.opt_g.restore(ar.meta.at("optimizer_steps").at("g").get<std::int64_t>(), ar.with_prefix("opt.g."));
  s.opt_d.restore(ar.meta.at("optimizer_steps").at("d").get<std::int64_t>(), ar.with_prefix("opt.d."));
  s.step = ar.meta.at("step_count").get<std::int64_t>();
  s.skipped = ar.meta.at("skipped_samples").get<std::size_t>();
  s.data_rng.deserialize(ar.meta.at("rng").at("data").get<std::string>());
  s.atten_rng.deserialize(ar.meta.at("rng").at("atten").get<std::string>());
}

HueModel HueModel::from_archive(const nn::Archive& ar) {
  if (!ar.meta.contains("hue_model")) throw StateError("checkpoint does not contain a hue model");
  const auto& d = ar.meta["hue_model"];
  if (d.value("encoder", "") != kEncoderIdentity) {
    throw StateError("checkpoint encoder '" + d.value("encoder", "") + "' is not supported");
  }
  HueModel m{HueNet(HueConfig::from_json(d.at("net")), 0), d.at("resolution").get<int>()};
  ar.load_into(m.net.parameters(), "model.hue.");
  return m;
}

// ---------------------------------------------------------------- pipeline

nlohmann::json RestoreResult::side_info() const {
  return {{"silk", prior.silk.to_json()},
          {"silk_fallback", prior.silk_fallback},
          {"silk_candidates", prior.candidate_count},
          {"mask", {{"count", prior.mask.count()}, {"fraction", prior.mask.fraction()}}},
          {"timings_ms", timings_ms}};
}

RestoreResult restore_painting(const LabImage& degraded, const lumen::LumenModel& lumen, const HueNet& hue,
                               const PriorConfig& prior_cfg) {
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double, std::milli>(b - a).count(); };
  RestoreResult r;

  auto t0 = clock::now();
  std::optional<LuminancePlane> L_hat;
  try {
    L_hat = lumen::restore_luminance(luminance_8bit(degraded, LumDomain::real_degraded), lumen);
  } catch (const Error& e) {
    throw StageError("luminance", e.what());
  }
  auto t1 = clock::now();
  try {
    r.prior = extract_color_prior(degraded, prior_cfg, std::nullopt, SilkFallback::use_origin);
  } catch (const Error& e) {
    throw StageError("prior", e.what());
  }
  auto t2 = clock::now();
  ChromaPlanes ab;
  try {
    ab = correct_hue(*L_hat, r.prior.prior, r.prior.mask, hue);
  } catch (const Error& e) {
    throw StageError("hue", e.what());
  }
  auto t3 = clock::now();
  r.lab = compose_lab(luminance_to_lab_l(*L_hat), ab);
  r.rgb = lab_to_rgb(r.lab);
  r.timings_ms = {{"luminance", ms(t0, t1)}, {"prior", ms(t1, t2)}, {"hue", ms(t2, t3)}};
  return r;
}

}  // namespace previvor::hue
