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
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/degrade.hpp"
#include "previvor/image.hpp"
#include "previvor/nn/checkpoint.hpp"
#include "previvor/nn/layers.hpp"
#include "previvor/nn/losses.hpp"
#include "previvor/nn/optim.hpp"
#include "previvor/training.hpp"

// Luminance enhancement: a VAE shared by real and synthetic degraded
// luminance, a VAE for clean luminance, and a residual network that maps
// latents of the first onto latents of the second.
namespace previvor::lumen {

struct VaeConfig {
  std::size_t base_channels = 32;
  std::size_t latent_channels = 16;
  int depth = 3;  // stride-2 stages; latent is at 1 / 2^depth resolution

  void validate() const;
  nlohmann::json to_json() const;
  static VaeConfig from_json(const nlohmann::json& j);
};

struct MappingConfig {
  int blocks = 6;
  std::size_t feature_dim = 512;

  void validate() const;
  nlohmann::json to_json() const;
  static MappingConfig from_json(const nlohmann::json& j);
};

// Latent domain tags. A Latent<D> can only be decoded by a Vae<D>, so the
// restoration path has to go through the mapping network.
struct DegradedDomain {
  static constexpr const char* name = "shared";
};
struct CleanDomain {
  static constexpr const char* name = "clean";
};

template <class Domain>
struct Latent {
  nn::Tensor z;
};

template <class Domain>
struct VaeOutput {
  nn::Tensor reconstruction;
  nn::Tensor mu, logvar;
  Latent<Domain> latent;
};

// Inputs and outputs are [N, 1, H, W] luminance scaled to [-1, 1].
template <class Domain>
class Vae {
 public:
  Vae(const VaeConfig& cfg, Rng& rng);

  // With `noise` the latent is sampled by reparameterisation; without it the
  // posterior mean is used.
  VaeOutput<Domain> forward(const nn::Tensor& x, Rng* noise) const;
  std::pair<nn::Tensor, nn::Tensor> encode_stats(const nn::Tensor& x) const;
  Latent<Domain> encode(const nn::Tensor& x, Rng* noise = nullptr) const;
  nn::Tensor decode(const Latent<Domain>& latent) const;

  nn::ParamList parameters() const;
  const VaeConfig& config() const noexcept { return cfg_; }

 private:
  VaeConfig cfg_;
  std::vector<nn::Conv2d> down_;
  nn::Conv2d mu_head_, logvar_head_;
  nn::Conv2d dec_in_;
  std::vector<nn::Conv2d> up_;
  nn::Conv2d dec_out_;
};

using SharedVae = Vae<DegradedDomain>;
using CleanVae = Vae<CleanDomain>;

// Residual blocks between 1x1 projections; the output projection starts at
// zero so the network is the identity at initialisation.
class MappingNet {
 public:
  MappingNet(const MappingConfig& cfg, std::size_t latent_channels, Rng& rng);

  Latent<CleanDomain> operator()(const Latent<DegradedDomain>& z) const;

  nn::ParamList parameters() const;
  const MappingConfig& config() const noexcept { return cfg_; }

 private:
  MappingConfig cfg_;
  nn::Conv2d in_proj_, out_proj_;
  std::vector<std::pair<nn::Conv2d, nn::Conv2d>> blocks_;
};

// The three networks needed at inference plus their construction settings.
struct LumenModel {
  int resolution;
  VaeConfig vae_cfg;
  MappingConfig mapping_cfg;
  SharedVae shared;
  CleanVae clean;
  MappingNet mapping;

  LumenModel(int resolution, const VaeConfig& vae, const MappingConfig& map, std::uint64_t seed);

  nlohmann::json describe() const;
  void save_into(nn::Archive& ar) const;
  static LumenModel from_archive(const nn::Archive& ar);
};

// Mean |mapped - target| between the mapped degraded latent and the clean
// encoder's latent of the paired clean image.
nn::Tensor mapping_latent_loss(const Latent<CleanDomain>& mapped, const Latent<CleanDomain>& target);

// Luminance in [0, 255] <-> network range [-1, 1].
nn::Tensor luminance_tensor(const std::vector<const Plane*>& planes);

// Clean decoder applied to the mapped shared-encoder posterior mean.
LuminancePlane restore_luminance(const LuminancePlane& degraded, const SharedVae& encoder, const MappingNet& mapping,
                                 const CleanVae& decoder);
// Same, additionally enforcing the model's trained resolution.
LuminancePlane restore_luminance(const LuminancePlane& degraded, const LumenModel& model);

struct LumenTrainConfig {
  int resolution = 64;
  int batch_size = 4;
  int iterations = 200;  // per phase
  VaeConfig vae;
  MappingConfig mapping;
  nn::LossWeights weights;
  nn::LrSchedule schedule;
  nn::AdamWConfig adamw;
  LinearRanges linear_ranges;
  double empirical_probability = 0.5;
  bool fit_curve_from_pairs = true;
  int curve_bins = kDefaultCurveBins;
  std::size_t disc_base = 16;
  int disc_layers = 4;
  std::size_t latent_disc_hidden = 64;
  bool flip_augment = true;
  int checkpoint_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

// L8 planes the trainer draws from.
struct LumenData {
  std::vector<Plane> real_degraded;
  std::vector<Plane> non_degraded;
  std::vector<std::pair<Plane, Plane>> pairs;  // (degraded, restored), used to fit the empirical curve
};

enum class LumenPhase { vae_shared, vae_clean, mapping, done };

const char* to_string(LumenPhase p) noexcept;

class LumenTrainer {
 public:
  using CheckpointHook = std::function<void(const LumenTrainer&)>;

  LumenTrainer(LumenTrainConfig cfg, LumenData data);
  ~LumenTrainer();
  LumenTrainer(LumenTrainer&&) noexcept;
  LumenTrainer& operator=(LumenTrainer&&) noexcept;

  // Each phase runs its remaining iterations. Phases must run in order;
  // train_mapping requires frozen VAEs (see freeze_vaes).
  void train_vae_shared(const LogSink& sink = {}, const CheckpointHook& hook = {});
  void train_vae_clean(const LogSink& sink = {}, const CheckpointHook& hook = {});
  void train_mapping(const LogSink& sink = {}, const CheckpointHook& hook = {});
  void freeze_vaes();
  // Runs whatever remains of all phases.
  void run(const LogSink& sink = {}, const CheckpointHook& hook = {});

  LumenPhase phase() const noexcept;
  std::int64_t phase_step() const noexcept;
  const LumenModel& model() const noexcept;
  LumenModel& model() noexcept;
  const LumenTrainConfig& config() const noexcept;
  const DegradationSamplerConfig& sampler() const noexcept;
  const std::vector<IterationLog>& history() const noexcept;

  // Share of latents the latent discriminator labels correctly, with real
  // degraded inputs as the positive class and synthetic ones as negative.
  double latent_accuracy(const std::vector<Plane>& real_degraded, const std::vector<Plane>& synthetic) const;

  // Hook to stamp extra metadata (such as a config hash) into checkpoints.
  nlohmann::json extra_meta = nlohmann::json::object();

  nn::Archive to_archive() const;
  void resume_from(const nn::Archive& ar);

 private:
  struct State;
  std::unique_ptr<State> s_;
};

}  // namespace previvor::lumen
