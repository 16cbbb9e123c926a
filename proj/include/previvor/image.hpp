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
#include <span>
#include <utility>
#include <vector>

namespace previvor {

// Row-major H×W plane of doubles.
class Plane {
 public:
  Plane() = default;
  Plane(int rows, int cols, double fill = 0.0);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_shape(const Plane& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double& operator()(int r, int c) { return data_[index(r, c)]; }
  double operator()(int r, int c) const { return data_[index(r, c)]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

 private:
  std::size_t index(int r, int c) const noexcept {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// 8-bit interleaved RGB.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, std::array<std::uint8_t, 3> fill = {0, 0, 0});
  RgbImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  std::uint8_t& at(int row, int col, int ch) {
    return pixels_[offset(row, col) + static_cast<std::size_t>(ch)];
  }
  std::uint8_t at(int row, int col, int ch) const {
    return pixels_[offset(row, col) + static_cast<std::size_t>(ch)];
  }

  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
  std::span<std::uint8_t> pixels() noexcept { return pixels_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t offset(int row, int col) const noexcept {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(col)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

inline constexpr double kChromaMin = -128.0;
inline constexpr double kChromaMax = 127.0;

// CIELAB image. The constructor enforces L ∈ [0,100], a,b ∈ [-128,127] and
// equal plane shapes, so any LabImage in hand is valid.
class LabImage {
 public:
  LabImage() = default;
  LabImage(Plane L, Plane a, Plane b);

  int rows() const noexcept { return L_.rows(); }
  int cols() const noexcept { return L_.cols(); }

  const Plane& L() const noexcept { return L_; }
  const Plane& a() const noexcept { return a_; }
  const Plane& b() const noexcept { return b_; }

 private:
  Plane L_, a_, b_;
};

enum class LumDomain { real_degraded, synthetic_degraded, non_degraded, restored };

const char* to_string(LumDomain d) noexcept;

// Luminance on the 8-bit scale [0,255]. The domain tag is fixed at creation.
class LuminancePlane {
 public:
  LuminancePlane(Plane values, LumDomain domain);

  const Plane& values() const noexcept { return values_; }
  LumDomain domain() const noexcept { return domain_; }
  int rows() const noexcept { return values_.rows(); }
  int cols() const noexcept { return values_.cols(); }

 private:
  Plane values_;
  LumDomain domain_;
};

class ChromaPlanes {
 public:
  ChromaPlanes() = default;
  ChromaPlanes(Plane a, Plane b);

  const Plane& a() const noexcept { return a_; }
  const Plane& b() const noexcept { return b_; }
  int rows() const noexcept { return a_.rows(); }
  int cols() const noexcept { return a_.cols(); }

 private:
  Plane a_, b_;
};

struct PatchGrid {
  int patch_size = 0;
  int stride = 0;
  std::vector<std::pair<int, int>> origins;  // (row, col), row-major order

  // Origins for an image of the given size. When the stride does not tile
  // exactly the last row/column snaps to the image edge.
  static PatchGrid covering(int rows, int cols, int patch_size, int stride);
};

// sRGB (D65) <-> CIELAB.
std::array<double, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;
std::array<std::uint8_t, 3> lab_to_srgb(double L, double a, double b) noexcept;

LabImage rgb_to_lab(const RgbImage& img);
RgbImage lab_to_rgb(const LabImage& img);

LuminancePlane luminance_8bit(const LabImage& img, LumDomain domain);
// Inverse scale, clamped to [0,100].
Plane luminance_to_lab_l(const LuminancePlane& lum);

ChromaPlanes chroma_of(const LabImage& img);
LabImage compose_lab(const Plane& L, const ChromaPlanes& ab);

std::vector<LabImage> extract_patches(const LabImage& img, const PatchGrid& grid);

Plane clamp_plane(const Plane& p, double lo, double hi);

}  // namespace previvor
