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

#include "previvor/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "previvor/errors.hpp"

namespace previvor {

namespace {

// sRGB primaries, D65.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

// The reference white is the image of RGB (1,1,1), so the grey axis lands on
// a = b = 0 without rounding residue.
constexpr double kWhite[3] = {
    kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
    kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
    kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
};

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;

struct Mat3 {
  double m[3][3];
};

Mat3 invert(const double (&a)[3][3]) {
  Mat3 r{};
  const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  r.m[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
  r.m[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
  r.m[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
  r.m[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
  r.m[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
  r.m[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
  r.m[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
  r.m[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
  r.m[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  return r;
}

const Mat3& xyz_to_rgb() {
  static const Mat3 inv = invert(kRgbToXyz);
  return inv;
}

double srgb_decode(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_encode(double v) {
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }

double lab_f_inv(double f) {
  const double f3 = f * f * f;
  return f3 > kEpsilon ? f3 : (116.0 * f - 16.0) / kKappa;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

void check_range(const Plane& p, double lo, double hi, const char* name) {
  for (double v : p.values()) {
    if (!(v >= lo && v <= hi)) {
      throw RangeError(std::string("LabImage: ") + name + " value " + std::to_string(v) +
                       " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
}

}  // namespace

Plane::Plane(int rows, int cols, double fill) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1) throw DimensionError("Plane: dimensions must be positive");
  data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
}

RgbImage::RgbImage(int width, int height, std::array<std::uint8_t, 3> fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) throw DimensionError("RgbImage: dimensions must be positive");
  pixels_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill[0];
    pixels_[i + 1] = fill[1];
    pixels_[i + 2] = fill[2];
  }
}

RgbImage::RgbImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw DimensionError("RgbImage: dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw DimensionError("RgbImage: pixel buffer size does not match dimensions");
  }
}

LabImage::LabImage(Plane L, Plane a, Plane b)
    : L_(std::move(L)), a_(std::move(a)), b_(std::move(b)) {
  if (!L_.same_shape(a_) || !L_.same_shape(b_)) {
    throw DimensionError("LabImage: planes differ in shape");
  }
  check_range(L_, 0.0, 100.0, "L");
  check_range(a_, kChromaMin, kChromaMax, "a");
  check_range(b_, kChromaMin, kChromaMax, "b");
}

const char* to_string(LumDomain d) noexcept {
  switch (d) {
    case LumDomain::real_degraded: return "real_degraded";
    case LumDomain::synthetic_degraded: return "synthetic_degraded";
    case LumDomain::non_degraded: return "non_degraded";
    case LumDomain::restored: return "restored";
  }
  return "unknown";
}

LuminancePlane::LuminancePlane(Plane values, LumDomain domain)
    : values_(std::move(values)), domain_(domain) {
  for (double v : values_.values()) {
    if (!(v >= 0.0 && v <= 255.0)) {
      throw RangeError("LuminancePlane: value " + std::to_string(v) + " outside [0, 255]");
    }
  }
}

ChromaPlanes::ChromaPlanes(Plane a, Plane b) : a_(std::move(a)), b_(std::move(b)) {
  if (!a_.same_shape(b_)) throw DimensionError("ChromaPlanes: planes differ in shape");
  check_range(a_, kChromaMin, kChromaMax, "a");
  check_range(b_, kChromaMin, kChromaMax, "b");
}

PatchGrid PatchGrid::covering(int rows, int cols, int patch_size, int stride) {
  if (patch_size < 1 || stride < 1 || stride > patch_size) {
    throw DimensionError("PatchGrid: need 1 <= stride <= patch_size");
  }
  if (patch_size > rows || patch_size > cols) {
    throw DimensionError("PatchGrid: patch of " + std::to_string(patch_size) +
                         " exceeds image " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  auto axis = [&](int extent) {
    std::vector<int> starts;
    int o = 0;
    for (; o + patch_size <= extent; o += stride) starts.push_back(o);
    if (starts.back() + patch_size < extent) starts.push_back(extent - patch_size);
    return starts;
  };
  PatchGrid grid{patch_size, stride, {}};
  for (int r : axis(rows)) {
    for (int c : axis(cols)) grid.origins.emplace_back(r, c);
  }
  return grid;
}

std::array<double, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  const double lin[3] = {srgb_decode(r / 255.0), srgb_decode(g / 255.0), srgb_decode(b / 255.0)};
  double f[3];
  for (int i = 0; i < 3; ++i) {
    const double xyz = kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
    f[i] = lab_f(xyz / kWhite[i]);
  }
  const double L = std::clamp(116.0 * f[1] - 16.0, 0.0, 100.0);
  const double a = std::clamp(500.0 * (f[0] - f[1]), kChromaMin, kChromaMax);
  const double bb = std::clamp(200.0 * (f[1] - f[2]), kChromaMin, kChromaMax);
  return {L, a, bb};
}

std::array<std::uint8_t, 3> lab_to_srgb(double L, double a, double b) noexcept {
  const double fy = (L + 16.0) / 116.0;
  const double f[3] = {fy + a / 500.0, fy, fy - b / 200.0};
  double xyz[3];
  for (int i = 0; i < 3; ++i) xyz[i] = lab_f_inv(f[i]) * kWhite[i];
  const Mat3& m = xyz_to_rgb();
  std::array<std::uint8_t, 3> out{};
  for (int i = 0; i < 3; ++i) {
    const double lin = m.m[i][0] * xyz[0] + m.m[i][1] * xyz[1] + m.m[i][2] * xyz[2];
    out[static_cast<std::size_t>(i)] = to_byte(srgb_encode(std::clamp(lin, 0.0, 1.0)));
  }
  return out;
}

LabImage rgb_to_lab(const RgbImage& img) {
  Plane L(img.height(), img.width()), a(img.height(), img.width()), b(img.height(), img.width());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const auto lab = srgb_to_lab(img.at(r, c, 0), img.at(r, c, 1), img.at(r, c, 2));
      L(r, c) = lab[0];
      a(r, c) = lab[1];
      b(r, c) = lab[2];
    }
  }
  return LabImage(std::move(L), std::move(a), std::move(b));
}

RgbImage lab_to_rgb(const LabImage& img) {
  RgbImage out(img.cols(), img.rows());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const auto rgb = lab_to_srgb(img.L()(r, c), img.a()(r, c), img.b()(r, c));
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = rgb[static_cast<std::size_t>(ch)];
    }
  }
  return out;
}

LuminancePlane luminance_8bit(const LabImage& img, LumDomain domain) {
  Plane v(img.rows(), img.cols());
  auto src = img.L().values();
  auto dst = v.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::min(255.0, src[i] * 255.0 / 100.0);
  return LuminancePlane(std::move(v), domain);
}

Plane luminance_to_lab_l(const LuminancePlane& lum) {
  Plane L(lum.rows(), lum.cols());
  auto src = lum.values().values();
  auto dst = L.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i] * 100.0 / 255.0, 0.0, 100.0);
  return L;
}

ChromaPlanes chroma_of(const LabImage& img) { return ChromaPlanes(img.a(), img.b()); }

LabImage compose_lab(const Plane& L, const ChromaPlanes& ab) {
  return LabImage(L, ab.a(), ab.b());
}

std::vector<LabImage> extract_patches(const LabImage& img, const PatchGrid& grid) {
  std::vector<LabImage> out;
  out.reserve(grid.origins.size());
  const int n = grid.patch_size;
  for (const auto& [r0, c0] : grid.origins) {
    if (r0 < 0 || c0 < 0 || r0 + n > img.rows() || c0 + n > img.cols()) {
      throw DimensionError("extract_patches: patch at (" + std::to_string(r0) + ", " +
                           std::to_string(c0) + ") leaves the image");
    }
    Plane L(n, n), a(n, n), b(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        L(r, c) = img.L()(r0 + r, c0 + c);
        a(r, c) = img.a()(r0 + r, c0 + c);
        b(r, c) = img.b()(r0 + r, c0 + c);
      }
    }
    out.emplace_back(std::move(L), std::move(a), std::move(b));
  }
  return out;
}

Plane clamp_plane(const Plane& p, double lo, double hi) {
  Plane out = p;
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

}  // namespace previvor
