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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "previvor/corpus.hpp"
#include "previvor/huecorr.hpp"
#include "previvor/lumen.hpp"
#include "previvor/metrics.hpp"
#include "previvor/prior.hpp"

namespace previvor {

struct EvaluateConfig {
  metrics::EvalMode mode = metrics::EvalMode::paired;
  metrics::MaskPolicy mask_policy = metrics::MaskPolicy::none;
  metrics::FeatureExtractorSpec features;
};

// Everything a run needs, driven by one TOML file. Module seeds are derived
// from the single global seed, so they are not separately configurable.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_root = "runs";
  int corpus_n = 20;
  int curve_bins = kDefaultCurveBins;
  CorpusConfig corpus;
  PriorConfig prior;
  SilkFallback silk_fallback = SilkFallback::fail;
  lumen::LumenTrainConfig lumen;
  hue::HueTrainConfig hue;
  EvaluateConfig evaluate;

  // Pushes the global seed into every module config.
  void propagate_seed();
  void validate() const;

  // Canonical dump of every configurable key (TOML section layout).
  nlohmann::json to_json() const;
  // Hex FNV-1a 64 of the canonical dump.
  std::string hash() const;
};

// Priority: explicit override, then the config file, then PREVIVOR_SEED,
// then 0. Reports which source won.
struct SeedResolution {
  std::uint64_t seed = 0;
  std::string source;  // "flag", "config", "env" or "default"
};

// Parses TOML text over the defaults. Unknown sections or keys and values of
// the wrong type raise ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& toml_text, const std::string& origin = "<string>");
RunConfig load_run_config(const std::filesystem::path& path);

// Applies the seed priority to a config whose file may or may not have set
// one; `config_has_seed` tells whether the file did.
SeedResolution resolve_seed(RunConfig& cfg, bool config_has_seed, std::optional<std::uint64_t> flag);
bool toml_sets_seed(const std::string& toml_text);

// Settings that keep both training stages within a few minutes on one core.
RunConfig toy_run_config();

}  // namespace previvor
