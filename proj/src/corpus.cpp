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

#include "previvor/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "previvor/errors.hpp"
#include "previvor/png_io.hpp"
#include "previvor/prior.hpp"

namespace previvor {

// ---------------------------------------------------------------- generator

void SynthConfig::validate() const {
  if (image_size < 8) throw ConfigError("synth.image_size must be >= 8");
  if (palette.empty()) throw ConfigError("synth.palette must not be empty");
  if (min_shapes < 0 || max_shapes < min_shapes) throw ConfigError("synth shape count range is invalid");
  const ChromaBox box;
  if (!box.contains(silk_center[0], silk_center[1])) {
    throw ConfigError("synth.silk_center must lie inside the default silk chroma box");
  }
  if (silk_jitter < 0.0 || color_jitter < 0.0 || texture_noise < 0.0) {
    throw ConfigError("synth jitter and noise amplitudes must be >= 0");
  }
  if (!(silk_lightness[0] >= 0.0 && silk_lightness[1] <= 100.0 && silk_lightness[0] <= silk_lightness[1])) {
    throw ConfigError("synth.silk_lightness must be an ascending range inside [0, 100]");
  }
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json pal = nlohmann::json::array();
  for (const auto& c : palette) pal.push_back({c.L, c.a, c.b});
  return {{"image_size", image_size},     {"silk_center", silk_center},   {"silk_jitter", silk_jitter},
          {"silk_lightness", silk_lightness}, {"min_shapes", min_shapes}, {"max_shapes", max_shapes},
          {"palette", pal},               {"color_jitter", color_jitter}, {"texture_noise", texture_noise},
          {"seed", seed}};
}

namespace {

struct Shape2d {
  enum Kind { ellipse, rectangle, stroke } kind;
  double cx, cy, rx, ry, angle;  // stroke: (cx,cy)-(rx,ry) endpoints, angle = half width
  LabColor color;

  bool covers(double x, double y) const {
    switch (kind) {
      case ellipse: {
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = ((x - cx) * c + (y - cy) * s) / rx, v = (-(x - cx) * s + (y - cy) * c) / ry;
        return u * u + v * v <= 1.0;
      }
      case rectangle: {
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = (x - cx) * c + (y - cy) * s, v = -(x - cx) * s + (y - cy) * c;
        return std::abs(u) <= rx && std::abs(v) <= ry;
      }
      case stroke: {
        const double dx = rx - cx, dy = ry - cy;
        const double len2 = dx * dx + dy * dy;
        double t = len2 > 0 ? ((x - cx) * dx + (y - cy) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double px = cx + t * dx - x, py = cy + t * dy - y;
        return px * px + py * py <= angle * angle;
      }
    }
    return false;
  }
};

}  // namespace

LabImage generate_synthetic_painting(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n = cfg.image_size;
  const double size = static_cast<double>(n);
  const double silk_a = cfg.silk_center[0] + rng.uniform(-cfg.silk_jitter, cfg.silk_jitter);
  const double silk_b = cfg.silk_center[1] + rng.uniform(-cfg.silk_jitter, cfg.silk_jitter);
  const double silk_L = rng.uniform(cfg.silk_lightness[0], cfg.silk_lightness[1]);

  // Low-frequency shading of the ground.
  const double fx = rng.uniform(0.5, 2.0), fy = rng.uniform(0.5, 2.0);
  const double px = rng.uniform(0.0, 2.0 * std::numbers::pi), py = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double shade = rng.uniform(1.0, 4.0);

  std::vector<Shape2d> shapes;
  const int count = cfg.min_shapes + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.max_shapes - cfg.min_shapes + 1)));
  for (int i = 0; i < count; ++i) {
    Shape2d s{};
    s.kind = static_cast<Shape2d::Kind>(rng.index(3));
    s.cx = rng.uniform(0.1, 0.9) * size;
    s.cy = rng.uniform(0.1, 0.9) * size;
    if (s.kind == Shape2d::stroke) {
      s.rx = rng.uniform(0.1, 0.9) * size;
      s.ry = rng.uniform(0.1, 0.9) * size;
      s.angle = rng.uniform(0.04, 0.09) * size;
    } else {
      s.rx = rng.uniform(0.08, 0.25) * size;
      s.ry = rng.uniform(0.08, 0.25) * size;
      s.angle = rng.uniform(0.0, std::numbers::pi);
    }
    const LabColor& base = cfg.palette[rng.index(cfg.palette.size())];
    s.color = {std::clamp(base.L + rng.uniform(-cfg.color_jitter, cfg.color_jitter), 0.0, 100.0),
               base.a + rng.uniform(-cfg.color_jitter, cfg.color_jitter),
               base.b + rng.uniform(-cfg.color_jitter, cfg.color_jitter)};
    shapes.push_back(s);
  }

  Plane L(n, n), a(n, n), b(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      double lv = silk_L + shade * std::sin(2.0 * std::numbers::pi * fx * x / size + px) *
                               std::cos(2.0 * std::numbers::pi * fy * y / size + py);
      double av = silk_a, bv = silk_b;
      for (const auto& s : shapes) {
        if (s.covers(x, y)) {
          lv = s.color.L;
          av = s.color.a;
          bv = s.color.b;
        }
      }
      L(r, c) = std::clamp(lv + cfg.texture_noise * rng.normal(), 0.0, 100.0);
      a(r, c) = std::clamp(av + 0.3 * cfg.texture_noise * rng.normal(), kChromaMin, kChromaMax);
      b(r, c) = std::clamp(bv + 0.3 * cfg.texture_noise * rng.normal(), kChromaMin, kChromaMax);
    }
  }
  return LabImage(std::move(L), std::move(a), std::move(b));
}

// ---------------------------------------------------------------- manifest

const char* to_string(CorpusRole r) noexcept {
  switch (r) {
    case CorpusRole::real_degraded: return "real_degraded";
    case CorpusRole::non_degraded: return "non_degraded";
    case CorpusRole::paired_degraded: return "paired_degraded";
    case CorpusRole::paired_restored: return "paired_restored";
  }
  return "unknown";
}

const char* to_string(CorpusSplit s) noexcept { return s == CorpusSplit::train ? "train" : "heldout"; }

std::optional<CorpusRole> role_from_string(const std::string& s) noexcept {
  for (auto r : {CorpusRole::real_degraded, CorpusRole::non_degraded, CorpusRole::paired_degraded,
                 CorpusRole::paired_restored}) {
    if (s == to_string(r)) return r;
  }
  return std::nullopt;
}

std::optional<CorpusSplit> split_from_string(const std::string& s) noexcept {
  if (s == "train") return CorpusSplit::train;
  if (s == "heldout") return CorpusSplit::heldout;
  return std::nullopt;
}

nlohmann::json ManifestEntry::to_json() const {
  nlohmann::json j;
  j["path"] = path;
  j["role"] = to_string(role);
  if (pair_id) j["pair_id"] = *pair_id;
  j["split"] = to_string(split);
  if (!extra.empty()) j["extra"] = extra;
  return j;
}

std::filesystem::path CorpusManifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.path);
  return p.is_absolute() ? p : root / p;
}

std::vector<const ManifestEntry*> CorpusManifest::select(CorpusRole role, std::optional<CorpusSplit> split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.role == role && (!split || e.split == *split)) out.push_back(&e);
  }
  return out;
}

std::vector<std::pair<const ManifestEntry*, const ManifestEntry*>> CorpusManifest::pairs(
    std::optional<CorpusSplit> split) const {
  std::map<std::string, const ManifestEntry*> clean;
  for (const auto& e : entries) {
    if (e.pair_id && (e.role == CorpusRole::paired_restored || e.role == CorpusRole::non_degraded)) {
      clean[*e.pair_id] = &e;
    }
  }
  std::vector<std::pair<const ManifestEntry*, const ManifestEntry*>> out;
  for (const auto& e : entries) {
    if (e.role != CorpusRole::paired_degraded || (split && e.split != *split)) continue;
    auto it = clean.find(*e.pair_id);
    if (it != clean.end()) out.emplace_back(&e, it->second);
  }
  return out;
}

std::string CorpusManifest::to_jsonl() const {
  std::string out;
  for (const auto& e : entries) out += e.to_json().dump() + "\n";
  return out;
}

void CorpusManifest::save(const std::filesystem::path& path) const {
  const std::string text = to_jsonl();
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

CorpusManifest parse_manifest(const std::string& text, const std::filesystem::path& root, bool check_files) {
  CorpusManifest m;
  m.root = root;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("path") || !j["path"].is_string() || !j.contains("role") ||
        !j["role"].is_string()) {
      throw ManifestError(where + ": entry needs string fields 'path' and 'role'");
    }
    ManifestEntry e;
    e.path = j["path"].get<std::string>();
    const auto role = role_from_string(j["role"].get<std::string>());
    if (!role) throw ManifestError(where + ": unknown role '" + j["role"].get<std::string>() + "'");
    e.role = *role;
    if (j.contains("pair_id")) {
      if (!j["pair_id"].is_string()) throw ManifestError(where + ": pair_id must be a string");
      e.pair_id = j["pair_id"].get<std::string>();
    }
    if (j.contains("split")) {
      const auto split = j["split"].is_string() ? split_from_string(j["split"].get<std::string>()) : std::nullopt;
      if (!split) throw ManifestError(where + ": split must be 'train' or 'heldout'");
      e.split = *split;
    }
    if (j.contains("extra")) e.extra = j["extra"];
    for (const auto& [k, v] : j.items()) {
      if (k != "path" && k != "role" && k != "pair_id" && k != "split" && k != "extra") {
        throw ManifestError(where + ": unknown field '" + k + "'");
      }
    }
    if ((e.role == CorpusRole::paired_degraded || e.role == CorpusRole::paired_restored) && !e.pair_id) {
      throw PairingError(where + ": role " + to_string(e.role) + " requires a pair_id");
    }
    m.entries.push_back(std::move(e));
  }

  // Every pair_id names exactly one degraded image and one clean partner.
  std::map<std::string, std::vector<const ManifestEntry*>> groups;
  for (const auto& e : m.entries) {
    if (e.pair_id) groups[*e.pair_id].push_back(&e);
  }
  for (const auto& [id, members] : groups) {
    const ManifestEntry *deg = nullptr, *clean = nullptr;
    for (const auto* e : members) {
      if (e->role == CorpusRole::paired_degraded && !deg) {
        deg = e;
      } else if ((e->role == CorpusRole::paired_restored || e->role == CorpusRole::non_degraded) && !clean) {
        clean = e;
      } else {
        throw PairingError("pair_id '" + id + "' has more than one " + to_string(e->role) + " entry");
      }
    }
    if (!deg || !clean) throw PairingError("pair_id '" + id + "' is orphaned (needs a degraded and a clean entry)");
  }

  if (check_files) {
    for (const auto& e : m.entries) {
      if (!std::filesystem::exists(m.resolve(e))) throw IoError("manifest references missing file " + m.resolve(e).string());
    }
    for (const auto& [id, members] : groups) {
      const auto d0 = png_dimensions(m.resolve(*members[0]));
      const auto d1 = png_dimensions(m.resolve(*members[1]));
      if (d0 != d1) {
        throw PairingError("pair_id '" + id + "' has mismatched dimensions " + std::to_string(d0.first) + "x" +
                           std::to_string(d0.second) + " vs " + std::to_string(d1.first) + "x" +
                           std::to_string(d1.second));
      }
    }
  }
  return m;
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("manifest not found: " + path.string());
  const auto bytes = read_file_bytes(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

// ---------------------------------------------------------------- builder

void CorpusConfig::validate() const {
  synth.validate();
  degradation.validate();
  if (heldout_percent < 0 || heldout_percent > 100) throw ConfigError("corpus.heldout_percent must be in [0, 100]");
}

nlohmann::json CorpusConfig::to_json() const {
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : degradation.curve_pool) curves.push_back(c.to_json());
  return {{"synth", synth.to_json()},
          {"degradation",
           {{"alpha", {degradation.linear_ranges.alpha_lo, degradation.linear_ranges.alpha_hi}},
            {"beta", {degradation.linear_ranges.beta_lo, degradation.linear_ranges.beta_hi}},
            {"empirical_probability", degradation.mode_probability},
            {"curves", curves}}},
          {"attenuate_chroma", attenuate_chroma},
          {"heldout_percent", heldout_percent}};
}

DegradedSample degrade_image(const RgbImage& clean, const CorpusConfig& cfg, Rng& rng) {
  const LabImage lab = rgb_to_lab(clean);
  auto [lum, choice] = sample_degradation(luminance_8bit(lab, LumDomain::non_degraded), cfg.degradation, rng);
  DegradedSample out;
  out.luminance = choice;
  ChromaPlanes chroma = chroma_of(lab);
  if (cfg.attenuate_chroma) {
    const auto g = AttenuationParams::sample(rng);
    out.gamma_neg = g.gamma_neg();
    out.gamma_pos = g.gamma_pos();
    chroma = attenuate_chroma(chroma, g);
  }
  out.image = lab_to_rgb(compose_lab(luminance_to_lab_l(lum), chroma));
  return out;
}

CorpusManifest build_training_corpus(const CorpusConfig& cfg, int n_images, const std::filesystem::path& root) {
  cfg.validate();
  if (n_images < 0) throw ConfigError("n_images must be >= 0");
  CorpusManifest m;
  m.root = root;
  for (int i = 0; i < n_images; ++i) {
    Rng rng(mix_seed(cfg.synth.seed, static_cast<std::uint64_t>(i)));
    const RgbImage clean = lab_to_rgb(generate_synthetic_painting(cfg.synth, rng));
    const auto clean_png = encode_png(clean);
    const DegradedSample deg = degrade_image(clean, cfg, rng);

    // Split on content plus seed only, so it is stable under reordering.
    const std::uint64_t seed_bytes = cfg.synth.seed;
    const std::uint64_t h = fnv1a(clean_png.data(), clean_png.size(), fnv1a(&seed_bytes, sizeof seed_bytes));
    const CorpusSplit split =
        static_cast<int>(h % 100) < cfg.heldout_percent ? CorpusSplit::heldout : CorpusSplit::train;

    char id[16];
    std::snprintf(id, sizeof id, "%06d", i);
    const std::string sp = to_string(split);
    const std::string clean_rel = sp + "/non_degraded/" + id + ".png";
    const std::string deg_rel = sp + "/paired_degraded/" + id + ".png";
    std::filesystem::create_directories(root / sp / "non_degraded");
    std::filesystem::create_directories(root / sp / "paired_degraded");
    write_file_bytes(root / clean_rel, clean_png);
    write_png(root / deg_rel, deg.image);

    m.entries.push_back({clean_rel, CorpusRole::non_degraded, std::string(id), split, nlohmann::json::object()});
    m.entries.push_back({deg_rel, CorpusRole::paired_degraded, std::string(id), split,
                         {{"luminance", deg.luminance.to_json()},
                          {"gamma_neg", deg.gamma_neg},
                          {"gamma_pos", deg.gamma_pos}}});
  }
  std::filesystem::create_directories(root);
  m.save(root / "manifest.jsonl");
  return m;
}

}  // namespace previvor
