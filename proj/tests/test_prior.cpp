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

#include <doctest.h>

#include <cmath>
#include <set>

#include "previvor/corpus.hpp"
#include "previvor/errors.hpp"
#include "previvor/prior.hpp"
#include "previvor/rng.hpp"

using namespace previvor;

namespace {

LabImage uniform(int rows, int cols, double L, double a, double b) {
  return LabImage(Plane(rows, cols, L), Plane(rows, cols, a), Plane(rows, cols, b));
}

LabImage random_lab(int rows, int cols, Rng& rng) {
  Plane L(rows, cols), a(rows, cols), b(rows, cols);
  for (auto& v : L.values()) v = rng.uniform(0, 100);
  for (auto& v : a.values()) v = rng.uniform(-128, 127);
  for (auto& v : b.values()) v = rng.uniform(-128, 127);
  return LabImage(L, a, b);
}

// Smooth silk ground on the left half, textured pigment on the right half.
LabImage half_and_half(Rng& rng) {
  const int n = 24;
  Plane L(n, n, 70.0), a(n, n), b(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (c < n / 2) {
        a(r, c) = 8.0 + 0.05 * r;
        b(r, c) = 20.0 + 0.05 * c;
      } else {
        a(r, c) = rng.uniform(-40, 60);
        b(r, c) = rng.uniform(-40, 60);
      }
    }
  }
  return LabImage(L, a, b);
}

double oracle_gradient(const LabImage& img, int r, int c) {
  double s = 0;
  for (const Plane* p : {&img.a(), &img.b()}) {
    const int c0 = c + 1 < img.cols() ? c : c - 1, r0 = r + 1 < img.rows() ? r : r - 1;
    const double dx = (*p)(r, c0 + 1) - (*p)(r, c0);
    const double dy = (*p)(r0 + 1, c) - (*p)(r0, c);
    s += dx * dx + dy * dy;
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("background mask") {
  PriorConfig cfg;
  const auto inside = uniform(5, 6, 70, 10, 20);
  CHECK(background_mask(inside, cfg).count() == 30);
  CHECK(background_mask(uniform(5, 6, 70, -60, 20), cfg).count() == 0);
  PriorMask ext(5, 6);
  ext(1, 2) = 1;
  ext(4, 5) = 1;
  CHECK(background_mask(inside, cfg, ext) == ext);
  CHECK_THROWS_AS(background_mask(inside, cfg, PriorMask(5, 5)), DimensionError);
}

TEST_CASE("silk candidate filtering") {
  PriorConfig cfg;
  SUBCASE("uniform silk image") {
    const auto img = uniform(8, 9, 70, 10, 20);
    CHECK(filter_silk_candidates(img, background_mask(img, cfg), cfg).size() == 72);
  }
  SUBCASE("checkerboard") {
    Plane a(8, 8), b(8, 8, 20.0);
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) a(r, c) = (r + c) % 2 ? 0.0 : 20.0;
    }
    const LabImage img(Plane(8, 8, 60.0), a, b);
    for (double thr : {0.0, 1.0, 10.0, 19.9}) {
      cfg.gradient_threshold = thr;
      CHECK(filter_silk_candidates(img, PriorMask(8, 8, 1), cfg).empty());
    }
  }
  SUBCASE("brute-force oracle") {
    for (std::uint64_t seed : {1, 2, 3}) {
      Rng rng(seed);
      const auto img = half_and_half(rng);
      const auto bg = background_mask(img, cfg);
      const auto got = filter_silk_candidates(img, bg, cfg);
      std::set<PixelCoord> want;
      for (int r = 0; r < img.rows(); ++r) {
        for (int c = 0; c < img.cols(); ++c) {
          if (bg(r, c) && cfg.silk_box.contains(img.a()(r, c), img.b()(r, c)) &&
              oracle_gradient(img, r, c) <= cfg.gradient_threshold) {
            want.insert({r, c});
          }
        }
      }
      CHECK(std::set<PixelCoord>(got.begin(), got.end()) == want);
      CHECK(want.size() > 200);
    }
  }
  SUBCASE("gradient magnitude") {
    Rng rng(5);
    const auto img = random_lab(6, 7, rng);
    const auto g = chroma_gradient_magnitude(img);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 7; ++c) CHECK(g(r, c) == doctest::Approx(oracle_gradient(img, r, c)));
    }
  }
}

TEST_CASE("silk colour estimation") {
  PriorConfig cfg;
  SUBCASE("single colour") {
    const auto img = uniform(6, 6, 70, 12, 25);
    std::vector<PixelCoord> all;
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) all.emplace_back(r, c);
    }
    const auto s = estimate_silk_color(img, all, cfg);
    CHECK(s.c_silk[0] == doctest::Approx(12.0));
    CHECK(s.c_silk[1] == doctest::Approx(25.0));
    CHECK(s.support_fraction == doctest::Approx(1.0));
  }
  SUBCASE("two blobs, 70/30") {
    Rng rng(11);
    Plane a(10, 10), b(10, 10);
    std::vector<PixelCoord> all;
    double ma = 0, mb = 0;
    for (int i = 0; i < 100; ++i) {
      const int r = i / 10, c = i % 10;
      const bool big = i < 70;
      a(r, c) = (big ? 5.0 : 22.0) + rng.uniform(-1, 1);
      b(r, c) = (big ? 10.0 : 35.0) + rng.uniform(-1, 1);
      if (big) {
        ma += a(r, c) / 70;
        mb += b(r, c) / 70;
      }
      all.emplace_back(r, c);
    }
    const LabImage img(Plane(10, 10, 70), a, b);
    cfg.k = 2;
    const auto s = estimate_silk_color(img, all, cfg);
    CHECK(std::abs(s.c_silk[0] - ma) < 0.5);
    CHECK(std::abs(s.c_silk[1] - mb) < 0.5);
    CHECK(s.support_fraction == doctest::Approx(0.7));
    cfg.k = 1;
    const auto one = estimate_silk_color(img, all, cfg);
    double ta = 0, tb = 0;
    for (auto [r, c] : all) {
      ta += a(r, c) / 100;
      tb += b(r, c) / 100;
    }
    CHECK(one.c_silk[0] == doctest::Approx(ta));
    CHECK(one.c_silk[1] == doctest::Approx(tb));
  }
  SUBCASE("no candidates") { CHECK_THROWS_AS(estimate_silk_color(uniform(4, 4, 50, 0, 0), {}, cfg), NoSilkFoundError); }
}

TEST_CASE("prior mask threshold") {
  SUBCASE("uniform silk gives an empty mask") {
    CHECK(compute_prior_mask(uniform(5, 5, 70, 10, 20), {10, 20}, 20).count() == 0);
  }
  SUBCASE("distance exactly tau is excluded") {
    Plane a(1, 3, 10.0), b(1, 3, 20.0);
    a(0, 0) = 13.0;
    b(0, 0) = 24.0;  // distance 5
    a(0, 1) = 13.0;
    b(0, 1) = 24.5;
    const auto m = compute_prior_mask(LabImage(Plane(1, 3, 50), a, b), {10, 20}, 5.0);
    CHECK(m(0, 0) == 0);
    CHECK(m(0, 1) == 1);
    CHECK(m(0, 2) == 0);
  }
  SUBCASE("random images match the brute-force rule bit-exactly") {
    Rng rng(17);
    for (int t = 0; t < 100; ++t) {
      const auto img = random_lab(32, 32, rng);
      const std::array<double, 2> cs{rng.uniform(-20, 30), rng.uniform(-10, 40)};
      const double tau = rng.uniform(5, 60);
      const auto m = compute_prior_mask(img, cs, tau);
      for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
          const double da = img.a()(r, c) - cs[0], db = img.b()(r, c) - cs[1];
          REQUIRE(m(r, c) == (std::sqrt(da * da + db * db) > tau ? 1 : 0));
        }
      }
    }
  }
  SUBCASE("translation invariance") {
    Rng rng(19);
    Plane a(16, 16), b(16, 16), a2(16, 16), b2(16, 16);
    for (int i = 0; i < 256; ++i) {
      a.values()[i] = rng.uniform(-50, 50);
      b.values()[i] = rng.uniform(-50, 50);
      a2.values()[i] = a.values()[i] + 17.0;
      b2.values()[i] = b.values()[i] - 9.0;
    }
    const auto m1 = compute_prior_mask(LabImage(Plane(16, 16, 50), a, b), {3, 4}, 25);
    const auto m2 = compute_prior_mask(LabImage(Plane(16, 16, 50), a2, b2), {20, -5}, 25);
    // Offsets are exact in binary only up to rounding, so compare away from the boundary.
    int differ = 0;
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 16; ++c) differ += m1(r, c) != m2(r, c);
    }
    CHECK(differ == 0);
  }
}

TEST_CASE("prior extraction by masking") {
  Rng rng(23);
  const auto img = random_lab(9, 9, rng);
  CHECK(extract_prior(img, PriorMask(9, 9, 1)).a().values()[40] == img.a().values()[40]);
  const auto zero = extract_prior(img, PriorMask(9, 9, 0));
  for (double v : zero.b().values()) CHECK(v == 0.0);
  PriorMask one(9, 9);
  one(4, 7) = 1;
  const auto single = extract_prior(img, one);
  for (int r = 0; r < 9; ++r) {
    for (int c = 0; c < 9; ++c) {
      if (r == 4 && c == 7) {
        CHECK(single.a()(r, c) == img.a()(r, c));
        CHECK(single.b()(r, c) == img.b()(r, c));
      } else {
        CHECK(single.a()(r, c) == 0.0);
      }
    }
  }
  const auto m = compute_prior_mask(img, {0, 0}, 40);
  const auto once = extract_prior(img, m);
  const auto twice = extract_prior(once, m);
  CHECK(std::equal(once.a().values().begin(), once.a().values().end(), twice.a().values().begin()));
  CHECK_THROWS_AS(extract_prior(img, PriorMask(8, 9)), DimensionError);
}

TEST_CASE("full extraction on synthetic paintings") {
  PriorConfig cfg;
  SynthConfig sc;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto img = generate_synthetic_painting(sc, rng);
    const auto a = extract_color_prior(img, cfg);
    const auto b = extract_color_prior(img, cfg);
    CHECK(a.mask == b.mask);
    CHECK(a.silk.c_silk == b.silk.c_silk);
    CHECK_FALSE(a.silk_fallback);
    CHECK(cfg.silk_box.contains(a.silk.c_silk[0], a.silk.c_silk[1]));
    CHECK(a.silk.support_fraction > 0.0);
    CHECK(a.silk.support_fraction <= 1.0);
    CHECK(a.mask == compute_prior_mask(img, a.silk.c_silk, cfg.tau));
    // Unmasked pixels keep their chroma exactly.
    for (int r = 0; r < img.rows(); ++r) {
      for (int c = 0; c < img.cols(); ++c) {
        if (a.mask(r, c)) CHECK(a.prior.a()(r, c) == img.a()(r, c));
      }
    }
  }
}

TEST_CASE("background-only painting yields an almost empty mask") {
  SynthConfig sc;
  sc.min_shapes = 0;
  sc.max_shapes = 0;
  Rng rng(4);
  const auto img = generate_synthetic_painting(sc, rng);
  const auto ex = extract_color_prior(img, PriorConfig{});
  CHECK(ex.mask.fraction() <= 0.01);
}

TEST_CASE("silk estimation failure and fallback") {
  const auto img = uniform(8, 8, 60, -70, -70);
  CHECK_THROWS_AS(extract_color_prior(img, PriorConfig{}, PriorMask(8, 8, 0), SilkFallback::fail), NoSilkFoundError);
  const auto ex = extract_color_prior(img, PriorConfig{}, PriorMask(8, 8, 0), SilkFallback::use_origin);
  CHECK(ex.silk_fallback);
  CHECK(ex.silk.c_silk == std::array<double, 2>{0.0, 0.0});
  CHECK(ex.mask.count() == 64);
}
