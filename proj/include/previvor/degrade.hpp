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

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/image.hpp"
#include "previvor/rng.hpp"

namespace previvor {

// Linear luminance fading L_sd = alpha * L_nd + beta, on the 8-bit scale.
class LinearCurveParams {
 public:
  static constexpr double kAlphaMin = 0.2, kAlphaMax = 0.5;
  static constexpr double kBetaMin = 15.0, kBetaMax = 25.0;

  LinearCurveParams(double alpha, double beta);

  double alpha() const noexcept { return alpha_; }
  double beta() const noexcept { return beta_; }

 private:
  double alpha_, beta_;
};

struct LinearRanges {
  double alpha_lo = LinearCurveParams::kAlphaMin;
  double alpha_hi = LinearCurveParams::kAlphaMax;
  double beta_lo = LinearCurveParams::kBetaMin;
  double beta_hi = LinearCurveParams::kBetaMax;

  void validate() const;
  LinearCurveParams sample(Rng& rng) const;
};

// Binned lookup of mean (degraded - restored) luminance, keyed by restored
// luminance. Bins with no samples are filled from their neighbours and
// flagged in `populated`.
struct EmpiricalCurve {
  std::vector<double> bin_edges;   // B+1, strictly ascending
  std::vector<double> mean_delta;  // B
  std::vector<long> counts;        // B

  std::size_t bins() const noexcept { return mean_delta.size(); }
  double center(std::size_t b) const { return 0.5 * (bin_edges[b] + bin_edges[b + 1]); }
  bool populated(std::size_t b) const { return counts[b] > 0; }

  // Interpolated delta at luminance `v` (bin centres as knots, flat beyond).
  double delta_at(double v) const;

  void validate() const;

  nlohmann::json to_json() const;
  static EmpiricalCurve from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static EmpiricalCurve load(const std::filesystem::path& path);
};

inline constexpr int kDefaultCurveBins = 32;

EmpiricalCurve fit_empirical_curve(
    const std::vector<std::pair<LuminancePlane, LuminancePlane>>& degraded_restored,
    int bins = kDefaultCurveBins);

LuminancePlane apply_linear_degradation(const LuminancePlane& L_nd, const LinearCurveParams& params);
LuminancePlane apply_empirical_curve(const LuminancePlane& L_nd, const EmpiricalCurve& curve);

struct DegradationSamplerConfig {
  LinearRanges linear_ranges;
  std::vector<EmpiricalCurve> curve_pool;
  double mode_probability = 0.5;  // chance of drawing an empirical curve

  void validate() const;
};

struct DegradationChoice {
  enum class Kind { linear, empirical } kind = Kind::linear;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t curve_index = 0;

  nlohmann::json to_json() const;
};

std::pair<LuminancePlane, DegradationChoice> sample_degradation(
    const LuminancePlane& L_nd, const DegradationSamplerConfig& cfg, Rng& rng);

// Sign-dependent chroma shrink: negative values scale by gamma_neg,
// positive by gamma_pos.
class AttenuationParams {
 public:
  static constexpr double kNegMin = 0.2, kNegMax = 0.5;
  static constexpr double kPosMin = 0.5, kPosMax = 0.9;

  AttenuationParams(double gamma_neg, double gamma_pos);

  // gamma = 1 on both signs. Outside the sampled ranges; for tests and
  // diagnostics that need attenuation switched off.
  static AttenuationParams identity() noexcept { return AttenuationParams(Unchecked{}, 1.0, 1.0); }

  static AttenuationParams sample(Rng& rng);

  double gamma_neg() const noexcept { return gamma_neg_; }
  double gamma_pos() const noexcept { return gamma_pos_; }

 private:
  struct Unchecked {};
  AttenuationParams(Unchecked, double n, double p) noexcept : gamma_neg_(n), gamma_pos_(p) {}

  double gamma_neg_, gamma_pos_;
};

ChromaPlanes attenuate_chroma(const ChromaPlanes& prior, const AttenuationParams& params);

}  // namespace previvor
