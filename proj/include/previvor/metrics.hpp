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
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/image.hpp"
#include "previvor/prior.hpp"

namespace previvor::metrics {

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(255^2 / MSE) over all three channels. Identical images give
// kInfinitePsnr.
double psnr(const RgbImage& a, const RgbImage& b);

// Mean SSIM over every fully contained 11x11 Gaussian window (sigma 1.5) of
// the BT.601 luma of both images.
double ssim(const RgbImage& a, const RgbImage& b);

// Hasler-Susstrunk colorfulness with population statistics.
double colorfulness(const RgbImage& img);
double delta_colorfulness(const RgbImage& a, const RgbImage& b);

// Pixels outside the mask become black.
RgbImage apply_mask_policy(const RgbImage& img, const PriorMask& mask);

enum class MaskPolicy { none, prior_mask };
const char* to_string(MaskPolicy p) noexcept;
std::optional<MaskPolicy> mask_policy_from_string(const std::string& s) noexcept;

// Which embedding produced an FID. Two FIDs are comparable only when their
// identities match.
struct FeatureExtractorSpec {
  enum class Kind { random_conv_pyramid, external };
  Kind kind = Kind::random_conv_pyramid;
  std::uint64_t seed = 1234;
  std::vector<std::size_t> channels{8, 16, 32};
  std::filesystem::path table;  // external: CSV rows "key,v1,v2,..."

  std::string identity() const;
  nlohmann::json to_json() const;
};

// Maps images to fixed-length vectors according to a spec. The external kind
// looks images up by key in a precomputed table.
class FeatureEmbedder {
 public:
  explicit FeatureEmbedder(FeatureExtractorSpec spec);

  std::vector<double> embed(const RgbImage& img, const std::string& key = {}) const;
  std::size_t dim() const noexcept { return dim_; }
  const FeatureExtractorSpec& spec() const noexcept { return spec_; }

 private:
  FeatureExtractorSpec spec_;
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> table_;
};

using Embeddings = std::vector<std::vector<double>>;

inline constexpr double kFidEpsilon = 1e-6;

// Frechet distance between two Gaussians, each covariance regularized by
// eps * I before the symmetric square root.
double frechet_distance(const std::vector<double>& mu_a, const std::vector<std::vector<double>>& cov_a,
                        const std::vector<double>& mu_b, const std::vector<std::vector<double>>& cov_b,
                        double eps = kFidEpsilon);

// Fits a Gaussian to each embedding set (unbiased covariance) and returns the
// Frechet distance.
double frechet_distance(const Embeddings& a, const Embeddings& b, double eps = kFidEpsilon);

double fid(const std::vector<RgbImage>& set_a, const std::vector<RgbImage>& set_b, const FeatureExtractorSpec& spec,
           const std::vector<std::string>& keys_a = {}, const std::vector<std::string>& keys_b = {});

struct ImageRow {
  std::string name;
  std::optional<double> psnr;  // paired mode only
  std::optional<double> ssim;
  double colorfulness_pred = 0.0;
  double colorfulness_ref = 0.0;
  double delta_colorfulness = 0.0;
};

enum class EvalMode { paired, unpaired };

struct MetricReport {
  EvalMode mode = EvalMode::paired;
  MaskPolicy mask_policy = MaskPolicy::none;
  std::vector<ImageRow> rows;
  std::optional<double> fid;
  std::string feature_extractor;
  // Mean of per-image deltas (paired) and the delta of set means (both modes).
  std::optional<double> mean_delta_colorfulness;
  double set_delta_colorfulness = 0.0;
  std::size_t pred_count = 0;
  std::size_t ref_count = 0;
  nlohmann::json provenance = nlohmann::json::object();

  std::optional<double> mean_psnr() const;   // infinite when every row is
  std::optional<double> mean_ssim() const;
  std::size_t infinite_psnr_count() const;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Throws ConfigError when the two reports used different feature extractors.
void require_comparable_fid(const MetricReport& a, const MetricReport& b);

struct NamedImage {
  std::string name;
  RgbImage image;
};

// Paired: images matched by position (same length required, equal sizes).
// Unpaired: only FID and set-level colorfulness are emitted. Masks, when the
// policy is prior_mask, are applied identically to prediction and reference.
MetricReport evaluate(const std::vector<NamedImage>& pred, const std::vector<NamedImage>& ref, EvalMode mode,
                      MaskPolicy policy, const std::vector<PriorMask>& masks, const FeatureExtractorSpec& spec);

}  // namespace previvor::metrics
