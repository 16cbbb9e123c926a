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

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/image.hpp"
#include "previvor/lumen.hpp"
#include "previvor/nn/checkpoint.hpp"
#include "previvor/nn/layers.hpp"
#include "previvor/nn/losses.hpp"
#include "previvor/nn/optim.hpp"
#include "previvor/prior.hpp"
#include "previvor/training.hpp"

// Hue correction: predicts chroma from (enhanced) luminance plus the masked
// residual colour prior, using a conv pyramid, a pixel decoder and a stack of
// learnable colour queries refined by attention.
namespace previvor::hue {

enum class SubLayer { cross_attention, self_attention, mlp };

struct HueConfig {
  std::size_t queries = 32;  // K
  std::size_t dim = 64;      // d
  int blocks = 3;
  std::size_t heads = 4;
  std::size_t mlp_hidden = 128;
  std::array<std::size_t, 4> encoder_channels{32, 64, 96, 128};
  std::vector<SubLayer> block_order{SubLayer::cross_attention, SubLayer::self_attention, SubLayer::mlp};

  // K = 100, d = 256, 9 blocks.
  static HueConfig large();

  void validate() const;
  nlohmann::json to_json() const;
  static HueConfig from_json(const nlohmann::json& j);
};

inline constexpr const char* kEncoderIdentity = "conv_pyramid4";

struct FeatureSet {
  std::vector<nn::Tensor> scales;  // [N, d, H/16, W/16], [N, d, H/8, W/8], [N, d, H/4, W/4]
  nn::Tensor pixel_embedding;      // [N, d, H, W]
};

// Instrumentation filled by decode_colors when requested.
struct DecodeTrace {
  std::vector<nn::Tensor> cross_weights;  // per block and head, [N, K, tokens]
  std::vector<nn::Tensor> self_weights;   // per block and head, [N, K, K]
};

class HueNet {
 public:
  HueNet(const HueConfig& cfg, std::uint64_t seed);

  // Input is [N, 3, H, W] holding L/100, a/128, b/128; H and W multiples of 16.
  FeatureSet encode_features(const nn::Tensor& input) const;
  nn::Tensor decode_colors(const FeatureSet& features, DecodeTrace* trace = nullptr) const;  // [N, K, d]
  // Chroma in [-127, 127], [N, 2, H, W].
  nn::Tensor fuse(const FeatureSet& features, const nn::Tensor& queries) const;
  nn::Tensor forward(const nn::Tensor& input, DecodeTrace* trace = nullptr) const;

  nn::ParamList parameters() const;
  const HueConfig& config() const noexcept { return cfg_; }
  const nn::Tensor& color_queries() const noexcept { return queries_; }

 private:
  struct Block {
    nn::LayerNorm norm_cross, norm_self, norm_mlp;
    nn::MultiHeadAttention cross, self;
    nn::Mlp mlp;
  };

  HueConfig cfg_;
  std::array<nn::Conv2d, 4> enc_down_, enc_mix_;
  std::array<nn::Conv2d, 3> proj_;             // to d at 1/16, 1/8, 1/4
  std::array<nn::Conv2d, 2> lateral_;          // skips at 1/8 and 1/4
  nn::Conv2d up_half_, up_full_, embed_;       // 1/2, full resolution, final embedding
  nn::Tensor queries_;                         // [K, d]
  std::vector<Block> blocks_;
  nn::LayerNorm query_norm_;
  nn::Linear fusion_;                          // K -> 2
};

// Network input for one image: L / 100 and the prior chroma / 128, the prior
// forced to zero outside the mask.
nn::Tensor hue_input(const std::vector<const Plane*>& lab_L, const std::vector<const ChromaPlanes*>& priors,
                     const std::vector<const PriorMask*>& masks);

ChromaPlanes correct_hue(const LuminancePlane& L_hat, const ChromaPlanes& prior, const PriorMask& mask,
                         const HueNet& net);

struct HueSample {
  LabImage input;      // (L, masked and attenuated prior chroma)
  ChromaPlanes target;
  PriorMask mask;
  std::array<double, 2> c_silk{0.0, 0.0};
};

// Throws NoSilkFoundError when the silk colour cannot be estimated.
HueSample make_hue_training_pair(const LabImage& clean, const PriorConfig& prior_cfg, Rng& atten_rng);
HueSample make_hue_training_pair(const LabImage& clean, const PriorConfig& prior_cfg,
                                 const AttenuationParams& attenuation);

enum class LuminanceSource { non_degraded, restored };

struct HueTrainConfig {
  int resolution = 64;
  int batch_size = 4;
  int iterations = 200;
  HueConfig net;
  nn::LossWeights weights;
  nn::LrSchedule schedule;
  nn::AdamWConfig adamw;
  PriorConfig prior;
  double colorful_ref = nn::kDefaultColorfulRef;
  std::uint64_t perceptual_seed = 7;
  std::size_t disc_base = 16;
  int disc_layers = 4;
  LuminanceSource luminance_source = LuminanceSource::non_degraded;
  bool flip_augment = true;
  int checkpoint_every = 100;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

class HueTrainer {
 public:
  using CheckpointHook = std::function<void(const HueTrainer&)>;

  // `lumen` is required when the luminance source is `restored`.
  HueTrainer(HueTrainConfig cfg, std::vector<LabImage> clean, std::shared_ptr<const lumen::LumenModel> lumen = {});
  ~HueTrainer();
  HueTrainer(HueTrainer&&) noexcept;
  HueTrainer& operator=(HueTrainer&&) noexcept;

  void train(const LogSink& sink = {}, const CheckpointHook& hook = {});

  std::int64_t step() const noexcept;
  std::size_t skipped_samples() const noexcept;
  const HueNet& net() const noexcept;
  const HueTrainConfig& config() const noexcept;
  const std::vector<IterationLog>& history() const noexcept;

  nlohmann::json extra_meta = nlohmann::json::object();

  nn::Archive to_archive() const;
  void resume_from(const nn::Archive& ar);

 private:
  struct State;
  std::unique_ptr<State> s_;
};

// Inference-only bundle read back from a checkpoint.
struct HueModel {
  HueNet net;
  int resolution;

  static HueModel from_archive(const nn::Archive& ar);
};

struct RestoreResult {
  LabImage lab;
  RgbImage rgb;
  PriorExtraction prior;
  std::map<std::string, double> timings_ms;

  nlohmann::json side_info() const;
};

// Luminance first, then chroma from the enhanced luminance and the prior of
// the original degraded image. Failures are rethrown as StageError.
RestoreResult restore_painting(const LabImage& degraded, const lumen::LumenModel& lumen, const HueNet& hue,
                               const PriorConfig& prior_cfg);

}  // namespace previvor::hue
