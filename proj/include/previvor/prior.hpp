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
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/image.hpp"

namespace previvor {

class PriorMask {
 public:
  PriorMask() = default;
  PriorMask(int rows, int cols, std::uint8_t fill = 0);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::uint8_t& operator()(int r, int c) { return bits_[index(r, c)]; }
  std::uint8_t operator()(int r, int c) const { return bits_[index(r, c)]; }
  std::span<const std::uint8_t> values() const noexcept { return bits_; }

  std::size_t count() const noexcept;
  double fraction() const noexcept;
  bool operator==(const PriorMask&) const = default;

 private:
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct ChromaBox {
  double a_lo = -5.0, a_hi = 25.0;
  double b_lo = 0.0, b_hi = 40.0;

  bool contains(double a, double b) const noexcept {
    return a >= a_lo && a <= a_hi && b >= b_lo && b <= b_hi;
  }
};

struct PriorConfig {
  double tau = 20.0;
  int k = 3;
  double gradient_threshold = 2.0;
  ChromaBox silk_box;
  int kmeans_max_iters = 50;
  std::uint64_t kmeans_seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SilkEstimate {
  std::array<double, 2> c_silk{0.0, 0.0};  // (a, b)
  double support_fraction = 0.0;

  nlohmann::json to_json() const;
};

using PixelCoord = std::pair<int, int>;

PriorMask background_mask(const LabImage& img, const PriorConfig& cfg,
                          const std::optional<PriorMask>& external = std::nullopt);

// L2 norm of the four forward differences of a and b at each pixel. The
// last row/column uses the backward difference instead.
Plane chroma_gradient_magnitude(const LabImage& img);

std::vector<PixelCoord> filter_silk_candidates(const LabImage& img, const PriorMask& bg,
                                               const PriorConfig& cfg);

SilkEstimate estimate_silk_color(const LabImage& img, const std::vector<PixelCoord>& candidates,
                                 const PriorConfig& cfg);

PriorMask compute_prior_mask(const LabImage& img, std::array<double, 2> c_silk, double tau);

ChromaPlanes extract_prior(const ChromaPlanes& chroma, const PriorMask& mask);
ChromaPlanes extract_prior(const LabImage& img, const PriorMask& mask);

// Full four-step extraction.
struct PriorExtraction {
  PriorMask background;
  std::size_t candidate_count = 0;
  SilkEstimate silk;
  bool silk_fallback = false;  // no candidates; c_silk defaulted to (0, 0)
  PriorMask mask;
  ChromaPlanes prior;
};

enum class SilkFallback { fail, use_origin };

PriorExtraction extract_color_prior(const LabImage& img, const PriorConfig& cfg,
                                    const std::optional<PriorMask>& external_background = std::nullopt,
                                    SilkFallback fallback = SilkFallback::fail);

}  // namespace previvor
