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

#include "previvor/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "previvor/errors.hpp"
#include "previvor/rng.hpp"

namespace previvor {

namespace {

double dist2(double a0, double b0, double a1, double b1) {
  const double da = a0 - a1, db = b0 - b1;
  return da * da + db * db;
}

void require_shape(const PriorMask& m, int rows, int cols, const char* where) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(where) + ": mask is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", image is " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
}

}  // namespace

PriorMask::PriorMask(int rows, int cols, std::uint8_t fill) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1) throw DimensionError("PriorMask: dimensions must be positive");
  if (fill > 1) throw RangeError("PriorMask: fill must be 0 or 1");
  bits_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
}

std::size_t PriorMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double PriorMask::fraction() const noexcept {
  return bits_.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits_.size());
}

void PriorConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("PriorConfig: tau must be > 0");
  if (k < 1) throw ConfigError("PriorConfig: k must be >= 1");
  if (!(gradient_threshold >= 0.0)) throw ConfigError("PriorConfig: gradient_threshold must be >= 0");
  if (!(silk_box.a_lo <= silk_box.a_hi && silk_box.b_lo <= silk_box.b_hi)) {
    throw ConfigError("PriorConfig: silk_box is empty");
  }
  if (kmeans_max_iters < 1) throw ConfigError("PriorConfig: kmeans_max_iters must be >= 1");
}

nlohmann::json PriorConfig::to_json() const {
  return {{"tau", tau},
          {"k", k},
          {"gradient_threshold", gradient_threshold},
          {"silk_box", {silk_box.a_lo, silk_box.a_hi, silk_box.b_lo, silk_box.b_hi}},
          {"kmeans_max_iters", kmeans_max_iters},
          {"kmeans_seed", kmeans_seed}};
}

nlohmann::json SilkEstimate::to_json() const {
  return {{"a", c_silk[0]}, {"b", c_silk[1]}, {"support_fraction", support_fraction}};
}

PriorMask background_mask(const LabImage& img, const PriorConfig& cfg,
                          const std::optional<PriorMask>& external) {
  if (external) {
    require_shape(*external, img.rows(), img.cols(), "background_mask");
    return *external;
  }
  PriorMask bg(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      bg(r, c) = cfg.silk_box.contains(img.a()(r, c), img.b()(r, c)) ? 1 : 0;
    }
  }
  return bg;
}

Plane chroma_gradient_magnitude(const LabImage& img) {
  const int H = img.rows(), W = img.cols();
  const Plane& a = img.a();
  const Plane& b = img.b();
  Plane g(H, W);
  for (int r = 0; r < H; ++r) {
    // The last row/column reuses the difference to its predecessor.
    const int r0 = r + 1 < H ? r : std::max(0, r - 1), r1 = std::min(r0 + 1, H - 1);
    for (int c = 0; c < W; ++c) {
      const int c0 = c + 1 < W ? c : std::max(0, c - 1), c1 = std::min(c0 + 1, W - 1);
      const double ax = a(r, c1) - a(r, c0);
      const double ay = a(r1, c) - a(r0, c);
      const double bx = b(r, c1) - b(r, c0);
      const double by = b(r1, c) - b(r0, c);
      g(r, c) = std::sqrt(ax * ax + ay * ay + bx * bx + by * by);
    }
  }
  return g;
}

std::vector<PixelCoord> filter_silk_candidates(const LabImage& img, const PriorMask& bg,
                                               const PriorConfig& cfg) {
  require_shape(bg, img.rows(), img.cols(), "filter_silk_candidates");
  const Plane grad = chroma_gradient_magnitude(img);
  std::vector<PixelCoord> out;
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      if (bg(r, c) && cfg.silk_box.contains(img.a()(r, c), img.b()(r, c)) &&
          grad(r, c) <= cfg.gradient_threshold) {
        out.emplace_back(r, c);
      }
    }
  }
  return out;
}

SilkEstimate estimate_silk_color(const LabImage& img, const std::vector<PixelCoord>& candidates,
                                 const PriorConfig& cfg) {
  if (candidates.empty()) throw NoSilkFoundError("estimate_silk_color: no silk candidate pixels");
  cfg.validate();

  const std::size_t n = candidates.size();
  std::vector<double> pa(n), pb(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = img.a()(candidates[i].first, candidates[i].second);
    pb[i] = img.b()(candidates[i].first, candidates[i].second);
  }

  // Farthest-point seeding from a seeded first pick. Stops early when every
  // remaining point coincides with a centre.
  Rng rng(cfg.kmeans_seed);
  std::vector<std::array<double, 2>> centres;
  const std::size_t first = rng.index(n);
  centres.push_back({pa[first], pb[first]});
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centres.size() < static_cast<std::size_t>(cfg.k)) {
    const auto& last = centres.back();
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], dist2(pa[i], pb[i], last[0], last[1]));
      if (nearest[i] > far_d) {
        far_d = nearest[i];
        far = i;
      }
    }
    if (far_d <= 0.0) break;
    centres.push_back({pa[far], pb[far]});
  }

  const std::size_t k = centres.size();
  std::vector<std::size_t> label(n, 0);
  std::vector<std::size_t> sizes(k, 0);
  for (int iter = 0; iter < cfg.kmeans_max_iters; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = dist2(pa[i], pb[i], centres[0][0], centres[0][1]);
      for (std::size_t j = 1; j < k; ++j) {
        const double d = dist2(pa[i], pb[i], centres[j][0], centres[j][1]);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (label[i] != best) changed = true;
      label[i] = best;
    }
    std::vector<double> sa(k, 0.0), sb(k, 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sa[label[i]] += pa[i];
      sb[label[i]] += pb[i];
      ++sizes[label[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (sizes[j] > 0) centres[j] = {sa[j] / static_cast<double>(sizes[j]), sb[j] / static_cast<double>(sizes[j])};
    }
    if (!changed) break;
  }

  // Largest cluster wins; ties go to the smoother cluster, then to the
  // centre nearest the achromatic origin.
  const Plane grad = chroma_gradient_magnitude(img);
  std::vector<double> grad_sum(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) grad_sum[label[i]] += grad(candidates[i].first, candidates[i].second);
  std::size_t win = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (sizes[j] != sizes[win]) {
      if (sizes[j] > sizes[win]) win = j;
      continue;
    }
    if (sizes[j] == 0) continue;
    const double gj = grad_sum[j] / static_cast<double>(sizes[j]);
    const double gw = grad_sum[win] / static_cast<double>(sizes[win]);
    if (gj < gw || (gj == gw && std::hypot(centres[j][0], centres[j][1]) <
                                    std::hypot(centres[win][0], centres[win][1]))) {
      win = j;
    }
  }

  SilkEstimate est;
  est.c_silk = {std::clamp(centres[win][0], kChromaMin, kChromaMax),
                std::clamp(centres[win][1], kChromaMin, kChromaMax)};
  est.support_fraction = static_cast<double>(sizes[win]) / static_cast<double>(n);
  return est;
}

PriorMask compute_prior_mask(const LabImage& img, std::array<double, 2> c_silk, double tau) {
  PriorMask m(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const double da = img.a()(r, c) - c_silk[0];
      const double db = img.b()(r, c) - c_silk[1];
      m(r, c) = std::sqrt(da * da + db * db) > tau ? 1 : 0;
    }
  }
  return m;
}

ChromaPlanes extract_prior(const ChromaPlanes& chroma, const PriorMask& mask) {
  require_shape(mask, chroma.rows(), chroma.cols(), "extract_prior");
  Plane a = chroma.a(), b = chroma.b();
  for (int r = 0; r < chroma.rows(); ++r) {
    for (int c = 0; c < chroma.cols(); ++c) {
      if (!mask(r, c)) {
        a(r, c) = 0.0;
        b(r, c) = 0.0;
      }
    }
  }
  return ChromaPlanes(std::move(a), std::move(b));
}

ChromaPlanes extract_prior(const LabImage& img, const PriorMask& mask) {
  return extract_prior(chroma_of(img), mask);
}

PriorExtraction extract_color_prior(const LabImage& img, const PriorConfig& cfg,
                                    const std::optional<PriorMask>& external_background,
                                    SilkFallback fallback) {
  cfg.validate();
  PriorExtraction out;
  out.background = background_mask(img, cfg, external_background);
  const auto candidates = filter_silk_candidates(img, out.background, cfg);
  out.candidate_count = candidates.size();
  if (candidates.empty()) {
    if (fallback == SilkFallback::fail) {
      throw NoSilkFoundError("no silk candidate pixels (background " +
                             std::to_string(out.background.count()) + " px)");
    }
    out.silk_fallback = true;
    out.silk = SilkEstimate{{0.0, 0.0}, 0.0};
  } else {
    out.silk = estimate_silk_color(img, candidates, cfg);
  }
  out.mask = compute_prior_mask(img, out.silk.c_silk, cfg.tau);
  out.prior = extract_prior(img, out.mask);
  return out;
}

}  // namespace previvor
