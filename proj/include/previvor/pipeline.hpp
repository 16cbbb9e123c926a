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

// Glue between the corpus on disk and the library stages. The command-line
// tool and the Python module are thin adapters over these functions.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "previvor/corpus.hpp"
#include "previvor/huecorr.hpp"
#include "previvor/lumen.hpp"
#include "previvor/metrics.hpp"
#include "previvor/run_config.hpp"

namespace previvor {

// Training split only. Real degraded images come from real_degraded entries,
// or from paired_degraded ones when the corpus has none.
lumen::LumenData load_lumen_data(const CorpusManifest& manifest);
std::vector<LabImage> load_clean_images(const CorpusManifest& manifest);

// Fits the curve on every (degraded, clean) pair in the manifest.
EmpiricalCurve fit_curve_from_manifest(const CorpusManifest& manifest, int bins);

// Stamped into every artifact: config hash, seed and its source.
nlohmann::json provenance(const RunConfig& cfg, const std::string& seed_source);

struct TrainRunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  nlohmann::json provenance = nlohmann::json::object();
  LogSink echo;  // optional progress callback
};

struct TrainRunResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::int64_t iterations_run = 0;
};

inline constexpr const char* kLumenCheckpointName = "lumen.ckpt";
inline constexpr const char* kHueCheckpointName = "hue.ckpt";
inline constexpr const char* kLossLogName = "loss_log.jsonl";

// Both write {out}/<stage>.ckpt (periodically and at the end) and append
// one JSON line per iteration to {out}/loss_log.jsonl. On resume the log is
// cut back to the checkpoint's position before training continues.
TrainRunResult run_lumen_training(const RunConfig& cfg, const CorpusManifest& manifest, const TrainRunOptions& opts);
TrainRunResult run_hue_training(const RunConfig& cfg, const CorpusManifest& manifest, const TrainRunOptions& opts,
                                const std::optional<std::filesystem::path>& lumen_checkpoint);

struct LoadedModels {
  std::shared_ptr<lumen::LumenModel> lumen;
  std::shared_ptr<hue::HueModel> hue;
};
LoadedModels load_models(const std::filesystem::path& lumen_ckpt, const std::filesystem::path& hue_ckpt);

// Image must match the trained resolution of both models.
hue::RestoreResult restore_image(const RgbImage& degraded, const LoadedModels& models, const PriorConfig& prior);

// A directory (every *.png, by file stem) or a manifest. For a manifest the
// held-out pairs are used: `degraded_side` picks the degraded member,
// otherwise the clean one; names are pair ids.
std::vector<metrics::NamedImage> load_image_set(const std::filesystem::path& source, bool degraded_side);

// Paired mode aligns by name and rejects sets whose names differ. Masks for
// the prior_mask policy come from `mask_source` (matched by name) or, when
// absent, from the reference images.
metrics::MetricReport evaluate_sets(std::vector<metrics::NamedImage> pred, std::vector<metrics::NamedImage> ref,
                                    const EvaluateConfig& cfg, const PriorConfig& prior,
                                    const std::optional<std::vector<metrics::NamedImage>>& mask_source);

}  // namespace previvor
