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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/degrade.hpp"
#include "previvor/image.hpp"
#include "previvor/rng.hpp"

namespace previvor {

struct LabColor {
  double L, a, b;
};

// Procedural stand-in for a silk painting: a smooth silk-coloured ground with
// mild texture and a handful of opaque pigment shapes.
struct SynthConfig {
  int image_size = 64;
  std::array<double, 2> silk_center{8.0, 20.0};  // (a, b)
  double silk_jitter = 3.0;
  std::array<double, 2> silk_lightness{68.0, 82.0};
  int min_shapes = 3;
  int max_shapes = 7;
  std::vector<LabColor> palette{
      {48.0, 62.0, 42.0},    // cinnabar
      {38.0, 18.0, -48.0},   // azurite
      {55.0, -42.0, 28.0},   // malachite
      {72.0, 12.0, 68.0},    // orpiment
      {42.0, 48.0, -6.0},    // rouge
      {58.0, -30.0, -22.0},  // indigo-green
  };
  double color_jitter = 4.0;
  double texture_noise = 1.2;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

LabImage generate_synthetic_painting(const SynthConfig& cfg, Rng& rng);

enum class CorpusRole { real_degraded, non_degraded, paired_degraded, paired_restored };
enum class CorpusSplit { train, heldout };

const char* to_string(CorpusRole r) noexcept;
const char* to_string(CorpusSplit s) noexcept;
std::optional<CorpusRole> role_from_string(const std::string& s) noexcept;
std::optional<CorpusSplit> split_from_string(const std::string& s) noexcept;

struct ManifestEntry {
  std::string path;  // relative to the manifest directory unless absolute
  CorpusRole role = CorpusRole::non_degraded;
  std::optional<std::string> pair_id;
  CorpusSplit split = CorpusSplit::train;
  nlohmann::json extra = nlohmann::json::object();  // e.g. degradation parameters

  nlohmann::json to_json() const;
  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
  std::filesystem::path root;  // directory that relative paths resolve against
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<const ManifestEntry*> select(CorpusRole role, std::optional<CorpusSplit> split = std::nullopt) const;
  // (degraded, clean) pairs; the clean partner is paired_restored or, for
  // generated corpora, the non_degraded original carrying the same pair_id.
  std::vector<std::pair<const ManifestEntry*, const ManifestEntry*>> pairs(
      std::optional<CorpusSplit> split = std::nullopt) const;

  std::string to_jsonl() const;
  void save(const std::filesystem::path& path) const;
};

// Checks roles, pairing and file presence; each failure class has its own
// error type (IoError, ManifestError, PairingError).
CorpusManifest load_manifest(const std::filesystem::path& path);
CorpusManifest parse_manifest(const std::string& text, const std::filesystem::path& root, bool check_files = true);

struct CorpusConfig {
  SynthConfig synth;
  DegradationSamplerConfig degradation{LinearRanges{}, {}, 0.0};
  bool attenuate_chroma = true;
  int heldout_percent = 10;

  void validate() const;
  nlohmann::json to_json() const;
};

// Writes {root}/{split}/{role}/{pair_id}.png for every image plus
// {root}/manifest.jsonl, and returns the manifest.
CorpusManifest build_training_corpus(const CorpusConfig& cfg, int n_images, const std::filesystem::path& root);

// The degraded counterpart of a clean image, as the corpus builder makes it.
struct DegradedSample {
  RgbImage image;
  DegradationChoice luminance;
  double gamma_neg = 1.0, gamma_pos = 1.0;
};
DegradedSample degrade_image(const RgbImage& clean, const CorpusConfig& cfg, Rng& rng);

}  // namespace previvor
