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
#include <filesystem>

#include "previvor/degrade.hpp"
#include "previvor/errors.hpp"

using namespace previvor;

namespace {

LuminancePlane ramp(int n, LumDomain d = LumDomain::non_degraded) {
  Plane p(1, n);
  for (int i = 0; i < n; ++i) p(0, i) = 255.0 * i / (n - 1);
  return LuminancePlane(p, d);
}

LuminancePlane constant(double v, LumDomain d = LumDomain::non_degraded) { return LuminancePlane(Plane(4, 4, v), d); }

EmpiricalCurve flat_curve(double delta, int bins = 4) {
  EmpiricalCurve c;
  for (int i = 0; i <= bins; ++i) c.bin_edges.push_back(255.0 * i / bins);
  c.mean_delta.assign(bins, delta);
  c.counts.assign(bins, 10);
  return c;
}

}  // namespace

TEST_CASE("linear degradation arithmetic") {
  CHECK(apply_linear_degradation(constant(200), LinearCurveParams(0.3, 20)).values()(0, 0) == doctest::Approx(80.0));
  CHECK(apply_linear_degradation(constant(255), LinearCurveParams(0.2, 25)).values()(0, 0) == doctest::Approx(76.0));
  const auto out = apply_linear_degradation(constant(100), LinearCurveParams(0.5, 15));
  for (double v : out.values().values()) CHECK(v == doctest::Approx(65.0));
  CHECK(out.domain() == LumDomain::synthetic_degraded);
  CHECK_THROWS_AS(apply_linear_degradation(constant(100, LumDomain::restored), LinearCurveParams(0.5, 15)), StateError);
}

TEST_CASE("curve parameters enforce their ranges") {
  CHECK_THROWS_AS(LinearCurveParams(0.1, 20), RangeError);
  CHECK_THROWS_AS(LinearCurveParams(0.3, 30), RangeError);
  CHECK_THROWS_AS(AttenuationParams(0.6, 0.7), RangeError);
  CHECK_THROWS_AS(AttenuationParams(0.3, 0.95), RangeError);
}

TEST_CASE("linear degradation is monotone") {
  const auto out = apply_linear_degradation(ramp(256), LinearCurveParams(0.27, 17));
  for (int i = 1; i < 256; ++i) CHECK(out.values()(0, i) >= out.values()(0, i - 1));
}

TEST_CASE("curve fitting on simple pairs") {
  const auto r = ramp(1000, LumDomain::restored);
  SUBCASE("constant offset") {
    Plane d = r.values();
    for (auto& v : d.values()) v = std::max(0.0, v - 30.0);
    Plane rv = r.values();
    // Keep only pixels where the offset is not clamped.
    std::vector<std::pair<LuminancePlane, LuminancePlane>> pairs;
    Plane dd(1, 800), rr(1, 800);
    for (int i = 0; i < 800; ++i) {
      rr(0, i) = 30.0 + 225.0 * i / 799;
      dd(0, i) = rr(0, i) - 30.0;
    }
    pairs.emplace_back(LuminancePlane(dd, LumDomain::real_degraded), LuminancePlane(rr, LumDomain::restored));
    const auto c = fit_empirical_curve(pairs, 32);
    for (std::size_t b = 0; b < c.bins(); ++b) {
      if (c.populated(b)) CHECK(c.mean_delta[b] == doctest::Approx(-30.0));
    }
  }
  SUBCASE("identity pairs give a zero curve that leaves input unchanged") {
    const auto c = fit_empirical_curve({{r, r}}, 32);
    for (double d : c.mean_delta) CHECK(d == 0.0);
    const auto in = ramp(256);
    CHECK(apply_empirical_curve(in, c).values().values()[100] == in.values().values()[100]);
  }
  SUBCASE("one bin holds the global mean delta") {
    Plane dd(1, 3), rr(1, 3);
    rr(0, 0) = 10;
    rr(0, 1) = 100;
    rr(0, 2) = 200;
    dd(0, 0) = 5;
    dd(0, 1) = 80;
    dd(0, 2) = 160;
    const auto c = fit_empirical_curve({{LuminancePlane(dd, LumDomain::real_degraded), LuminancePlane(rr, LumDomain::restored)}}, 1);
    REQUIRE(c.bins() == 1);
    CHECK(c.mean_delta[0] == doctest::Approx((-5.0 - 20.0 - 40.0) / 3.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(fit_empirical_curve({}, 32), EmptyInputError);
    CHECK_THROWS_AS(fit_empirical_curve({{ramp(10), ramp(11)}}, 32), DimensionError);
  }
}

TEST_CASE("linear degradation is recovered by curve fitting") {
  for (auto [alpha, beta] : {std::pair{0.35, 20.0}, std::pair{0.2, 15.0}, std::pair{0.5, 25.0}}) {
    const auto nd = ramp(4096);
    const auto sd = apply_linear_degradation(nd, LinearCurveParams(alpha, beta));
    const auto c = fit_empirical_curve({{sd, LuminancePlane(nd.values(), LumDomain::restored)}}, 32);
    for (std::size_t b = 0; b < c.bins(); ++b) {
      // Brute-force oracle: mean over the ramp samples that fall in the bin.
      double s = 0;
      int n = 0;
      for (int i = 0; i < 4096; ++i) {
        const double v = nd.values()(0, i);
        const bool last = b + 1 == c.bins();
        if (v >= c.bin_edges[b] && (v < c.bin_edges[b + 1] || (last && v <= c.bin_edges[b + 1]))) {
          s += sd.values()(0, i) - v;
          ++n;
        }
      }
      REQUIRE(n > 0);
      CHECK(c.mean_delta[b] == doctest::Approx(s / n).epsilon(1e-9));
      CHECK(std::abs(c.mean_delta[b] - ((alpha - 1.0) * c.center(b) + beta)) < 1.0);
    }
  }
}

TEST_CASE("empirical curve application") {
  SUBCASE("constant curve with clamping") {
    const auto out = apply_empirical_curve(ramp(256), flat_curve(-30));
    CHECK(out.values()(0, 10) == 0.0);
    CHECK(out.values()(0, 100) == doctest::Approx(70.0));
    CHECK(out.domain() == LumDomain::synthetic_degraded);
  }
  SUBCASE("two-bin interpolation") {
    EmpiricalCurve c;
    c.bin_edges = {0, 128, 256};
    c.mean_delta = {-10, -50};
    c.counts = {1, 1};
    CHECK(c.delta_at(128) == doctest::Approx(-30.0));
    CHECK(c.delta_at(10) == doctest::Approx(-10.0));
    CHECK(c.delta_at(250) == doctest::Approx(-50.0));
    CHECK(apply_empirical_curve(constant(128), c).values()(0, 0) == doctest::Approx(98.0));
  }
  SUBCASE("empty bins are interpolated and flagged") {
    Plane dd(1, 2), rr(1, 2);
    rr(0, 0) = 10;
    rr(0, 1) = 250;
    dd(0, 0) = 0;
    dd(0, 1) = 210;
    const auto c = fit_empirical_curve({{LuminancePlane(dd, LumDomain::real_degraded), LuminancePlane(rr, LumDomain::restored)}}, 8);
    CHECK(c.populated(0));
    CHECK_FALSE(c.populated(3));
    CHECK(c.mean_delta[3] < -10.0);
    CHECK(c.mean_delta[3] > -40.0);
  }
  SUBCASE("JSON round trip") {
    const auto c = flat_curve(-12.5, 6);
    const auto back = EmpiricalCurve::from_json(c.to_json());
    CHECK(back.bin_edges == c.bin_edges);
    CHECK(back.mean_delta == c.mean_delta);
    CHECK(back.counts == c.counts);
    auto bad = c.to_json();
    bad["bin_edges"][2] = 0.0;
    CHECK_THROWS_AS(EmpiricalCurve::from_json(bad), ConfigError);
  }
}

TEST_CASE("degradation sampler") {
  const auto nd = ramp(64);
  SUBCASE("probability zero is always linear") {
    DegradationSamplerConfig cfg{LinearRanges{}, {}, 0.0};
    Rng rng(1);
    for (int i = 0; i < 200; ++i) CHECK(sample_degradation(nd, cfg, rng).second.kind == DegradationChoice::Kind::linear);
  }
  SUBCASE("probability one with a single curve") {
    DegradationSamplerConfig cfg{LinearRanges{}, {flat_curve(-20)}, 1.0};
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      const auto [out, choice] = sample_degradation(nd, cfg, rng);
      CHECK(choice.kind == DegradationChoice::Kind::empirical);
      CHECK(choice.curve_index == 0);
      CHECK(out.values()(0, 63) == doctest::Approx(235.0));
    }
  }
  SUBCASE("mixing fraction") {
    DegradationSamplerConfig cfg{LinearRanges{}, {flat_curve(-20), flat_curve(-40)}, 0.5};
    Rng rng(3);
    int emp = 0;
    for (int i = 0; i < 10000; ++i) emp += sample_degradation(nd, cfg, rng).second.kind == DegradationChoice::Kind::empirical;
    CHECK(emp >= 4700);
    CHECK(emp <= 5300);
  }
  SUBCASE("linear draws stay in range and are seed-deterministic") {
    DegradationSamplerConfig cfg{LinearRanges{}, {}, 0.0};
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) {
      const auto [oa, ca] = sample_degradation(nd, cfg, a);
      const auto [ob, cb] = sample_degradation(nd, cfg, b);
      CHECK(ca.alpha == cb.alpha);
      CHECK(oa.values().values()[5] == ob.values().values()[5]);
      CHECK(ca.alpha >= 0.2);
      CHECK(ca.alpha <= 0.5);
      CHECK(ca.beta >= 15.0);
      CHECK(ca.beta <= 25.0);
    }
  }
  SUBCASE("configuration errors") {
    Rng rng(4);
    CHECK_THROWS_AS(sample_degradation(nd, DegradationSamplerConfig{LinearRanges{}, {}, 1.0}, rng), ConfigError);
    CHECK_THROWS_AS((DegradationSamplerConfig{LinearRanges{}, {}, 1.5}.validate()), ConfigError);
  }
}

TEST_CASE("chroma attenuation") {
  Plane a(1, 3), b(1, 3);
  a(0, 0) = -10;
  a(0, 1) = 20;
  a(0, 2) = 0;
  b(0, 0) = 5;
  b(0, 1) = -40;
  b(0, 2) = 0;
  const auto out = attenuate_chroma(ChromaPlanes(a, b), AttenuationParams(0.3, 0.5));
  CHECK(out.a()(0, 0) == doctest::Approx(-3.0));
  CHECK(out.a()(0, 1) == doctest::Approx(10.0));
  CHECK(out.a()(0, 2) == 0.0);
  CHECK(out.b()(0, 0) == doctest::Approx(2.5));
  CHECK(out.b()(0, 1) == doctest::Approx(-12.0));

  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    Plane ra(4, 4), rb(4, 4);
    for (auto& v : ra.values()) v = rng.uniform(-128, 127);
    for (auto& v : rb.values()) v = rng.uniform(-128, 127);
    const auto p = AttenuationParams::sample(rng);
    const auto o = attenuate_chroma(ChromaPlanes(ra, rb), p);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::signbit(o.a().values()[i]) == std::signbit(ra.values()[i]));
      CHECK(std::abs(o.a().values()[i]) <= std::abs(ra.values()[i]));
      CHECK(std::abs(o.b().values()[i]) <= std::abs(rb.values()[i]));
    }
    const auto zero = attenuate_chroma(ChromaPlanes(Plane(2, 2), Plane(2, 2)), p);
    for (double v : zero.a().values()) CHECK(v == 0.0);
  }
}
