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

#include "previvor/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "previvor/errors.hpp"

namespace previvor {

namespace {

LuminancePlane map_luminance(const LuminancePlane& in, auto&& fn) {
  Plane out(in.rows(), in.cols());
  auto src = in.values().values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(fn(src[i]), 0.0, 255.0);
  return LuminancePlane(std::move(out), LumDomain::synthetic_degraded);
}

}  // namespace

LinearCurveParams::LinearCurveParams(double alpha, double beta) : alpha_(alpha), beta_(beta) {
  if (!(alpha >= kAlphaMin && alpha <= kAlphaMax)) {
    throw RangeError("LinearCurveParams: alpha " + std::to_string(alpha) + " outside [0.2, 0.5]");
  }
  if (!(beta >= kBetaMin && beta <= kBetaMax)) {
    throw RangeError("LinearCurveParams: beta " + std::to_string(beta) + " outside [15, 25]");
  }
}

void LinearRanges::validate() const {
  LinearCurveParams(alpha_lo, beta_lo);
  LinearCurveParams(alpha_hi, beta_hi);
  if (alpha_lo > alpha_hi || beta_lo > beta_hi) throw ConfigError("LinearRanges: lower bound above upper bound");
}

LinearCurveParams LinearRanges::sample(Rng& rng) const {
  const double a = rng.uniform(alpha_lo, alpha_hi);
  const double b = rng.uniform(beta_lo, beta_hi);
  return LinearCurveParams(a, b);
}

double EmpiricalCurve::delta_at(double v) const {
  const std::size_t n = bins();
  if (v <= center(0)) return mean_delta.front();
  if (v >= center(n - 1)) return mean_delta.back();
  // Knots are the bin centres, which are ascending with the edges.
  std::size_t hi = 1;
  while (center(hi) < v) ++hi;
  const double c0 = center(hi - 1), c1 = center(hi);
  const double t = (v - c0) / (c1 - c0);
  return mean_delta[hi - 1] + t * (mean_delta[hi] - mean_delta[hi - 1]);
}

void EmpiricalCurve::validate() const {
  if (mean_delta.empty()) throw ConfigError("EmpiricalCurve: no bins");
  if (bin_edges.size() != mean_delta.size() + 1 || counts.size() != mean_delta.size()) {
    throw ConfigError("EmpiricalCurve: edges/delta/count lengths disagree");
  }
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) throw ConfigError("EmpiricalCurve: edges not strictly ascending");
  }
  if (bin_edges.front() > 0.0 || bin_edges.back() < 255.0) {
    throw ConfigError("EmpiricalCurve: edges must cover [0, 255]");
  }
  for (std::size_t b = 0; b < bins(); ++b) {
    if (counts[b] < 0) throw ConfigError("EmpiricalCurve: negative bin count");
    if (!std::isfinite(mean_delta[b])) throw ConfigError("EmpiricalCurve: non-finite delta");
  }
}

nlohmann::json EmpiricalCurve::to_json() const {
  return {{"bin_edges", bin_edges}, {"mean_delta", mean_delta}, {"counts", counts}};
}

EmpiricalCurve EmpiricalCurve::from_json(const nlohmann::json& j) {
  EmpiricalCurve c;
  try {
    j.at("bin_edges").get_to(c.bin_edges);
    j.at("mean_delta").get_to(c.mean_delta);
    j.at("counts").get_to(c.counts);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("EmpiricalCurve JSON: ") + e.what());
  }
  c.validate();
  return c;
}

void EmpiricalCurve::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

EmpiricalCurve EmpiricalCurve::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

EmpiricalCurve fit_empirical_curve(
    const std::vector<std::pair<LuminancePlane, LuminancePlane>>& degraded_restored, int bins) {
  if (degraded_restored.empty()) throw EmptyInputError("fit_empirical_curve: no pairs");
  if (bins < 1) throw ConfigError("fit_empirical_curve: bins must be >= 1");
  const auto n = static_cast<std::size_t>(bins);
  const double width = 255.0 / bins;

  EmpiricalCurve curve;
  curve.bin_edges.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) curve.bin_edges[i] = width * static_cast<double>(i);
  curve.bin_edges.back() = 255.0;
  curve.counts.assign(n, 0);
  std::vector<double> sums(n, 0.0);

  for (const auto& [degraded, restored] : degraded_restored) {
    if (!degraded.values().same_shape(restored.values())) {
      throw DimensionError("fit_empirical_curve: pair dimensions differ");
    }
    auto d = degraded.values().values();
    auto r = restored.values().values();
    for (std::size_t i = 0; i < r.size(); ++i) {
      const auto b = std::min(n - 1, static_cast<std::size_t>(r[i] / width));
      sums[b] += d[i] - r[i];
      ++curve.counts[b];
    }
  }

  curve.mean_delta.assign(n, 0.0);
  std::vector<std::size_t> filled;
  for (std::size_t b = 0; b < n; ++b) {
    if (curve.counts[b] > 0) {
      curve.mean_delta[b] = sums[b] / static_cast<double>(curve.counts[b]);
      filled.push_back(b);
    }
  }
  if (filled.empty()) throw EmptyInputError("fit_empirical_curve: pairs contain no pixels");

  // Empty bins: linear between the nearest populated neighbours, flat past
  // the ends.
  for (std::size_t b = 0; b < n; ++b) {
    if (curve.counts[b] > 0) continue;
    auto upper = std::lower_bound(filled.begin(), filled.end(), b);
    if (upper == filled.begin()) {
      curve.mean_delta[b] = curve.mean_delta[filled.front()];
    } else if (upper == filled.end()) {
      curve.mean_delta[b] = curve.mean_delta[filled.back()];
    } else {
      const std::size_t lo = *(upper - 1), hi = *upper;
      const double t = (curve.center(b) - curve.center(lo)) / (curve.center(hi) - curve.center(lo));
      curve.mean_delta[b] = curve.mean_delta[lo] + t * (curve.mean_delta[hi] - curve.mean_delta[lo]);
    }
  }
  return curve;
}

LuminancePlane apply_linear_degradation(const LuminancePlane& L_nd, const LinearCurveParams& params) {
  if (L_nd.domain() != LumDomain::non_degraded) {
    throw StateError(std::string("apply_linear_degradation: expected non_degraded input, got ") +
                     to_string(L_nd.domain()));
  }
  const double a = params.alpha(), b = params.beta();
  return map_luminance(L_nd, [a, b](double v) { return a * v + b; });
}

LuminancePlane apply_empirical_curve(const LuminancePlane& L_nd, const EmpiricalCurve& curve) {
  curve.validate();
  return map_luminance(L_nd, [&curve](double v) { return v + curve.delta_at(v); });
}

void DegradationSamplerConfig::validate() const {
  linear_ranges.validate();
  if (!(mode_probability >= 0.0 && mode_probability <= 1.0)) {
    throw ConfigError("DegradationSamplerConfig: mode_probability outside [0, 1]");
  }
  if (curve_pool.empty() && mode_probability > 0.0) {
    throw ConfigError("DegradationSamplerConfig: empty curve pool with mode_probability > 0");
  }
  for (const auto& c : curve_pool) c.validate();
}

nlohmann::json DegradationChoice::to_json() const {
  if (kind == Kind::linear) return {{"kind", "linear"}, {"alpha", alpha}, {"beta", beta}};
  return {{"kind", "empirical"}, {"curve_index", curve_index}};
}

std::pair<LuminancePlane, DegradationChoice> sample_degradation(
    const LuminancePlane& L_nd, const DegradationSamplerConfig& cfg, Rng& rng) {
  cfg.linear_ranges.validate();
  if (!(cfg.mode_probability >= 0.0 && cfg.mode_probability <= 1.0)) {
    throw ConfigError("DegradationSamplerConfig: mode_probability outside [0, 1]");
  }
  DegradationChoice choice;
  if (rng.bernoulli(cfg.mode_probability)) {
    if (cfg.curve_pool.empty()) {
      throw ConfigError("sample_degradation: empirical curve chosen but the pool is empty");
    }
    choice.kind = DegradationChoice::Kind::empirical;
    choice.curve_index = rng.index(cfg.curve_pool.size());
    return {apply_empirical_curve(L_nd, cfg.curve_pool[choice.curve_index]), choice};
  }
  const LinearCurveParams p = cfg.linear_ranges.sample(rng);
  choice.alpha = p.alpha();
  choice.beta = p.beta();
  return {apply_linear_degradation(L_nd, p), choice};
}

AttenuationParams::AttenuationParams(double gamma_neg, double gamma_pos)
    : gamma_neg_(gamma_neg), gamma_pos_(gamma_pos) {
  if (!(gamma_neg >= kNegMin && gamma_neg <= kNegMax)) {
    throw RangeError("AttenuationParams: gamma_neg " + std::to_string(gamma_neg) + " outside [0.2, 0.5]");
  }
  if (!(gamma_pos >= kPosMin && gamma_pos <= kPosMax)) {
    throw RangeError("AttenuationParams: gamma_pos " + std::to_string(gamma_pos) + " outside [0.5, 0.9]");
  }
}

AttenuationParams AttenuationParams::sample(Rng& rng) {
  const double n = rng.uniform(kNegMin, kNegMax);
  const double p = rng.uniform(kPosMin, kPosMax);
  return AttenuationParams(n, p);
}

ChromaPlanes attenuate_chroma(const ChromaPlanes& prior, const AttenuationParams& params) {
  auto shrink = [&](const Plane& in) {
    Plane out = in;
    for (double& v : out.values()) {
      if (v < 0.0) v *= params.gamma_neg();
      else if (v > 0.0) v *= params.gamma_pos();
    }
    return out;
  };
  return ChromaPlanes(shrink(prior.a()), shrink(prior.b()));
}

}  // namespace previvor
