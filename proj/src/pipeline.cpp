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

#include "previvor/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "previvor/errors.hpp"
#include "previvor/png_io.hpp"

namespace previvor {

namespace fs = std::filesystem;

namespace {

Plane l8_of(const fs::path& p, LumDomain domain) { return luminance_8bit(rgb_to_lab(read_png(p)), domain).values(); }

int phase_rank(const std::string& phase) {
  if (phase == "vae_shared" || phase == "hue") return 0;
  if (phase == "vae_clean") return 1;
  if (phase == "mapping") return 2;
  return 3;
}

// Keeps the log lines that precede (phase, step) and returns how many.
std::size_t truncate_log(const fs::path& log, const std::string& phase, std::int64_t step) {
  std::vector<std::string> kept;
  if (std::ifstream in(log); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const int r = phase_rank(j.at("phase").get<std::string>());
      if (r < phase_rank(phase) || (r == phase_rank(phase) && j.at("iteration").get<std::int64_t>() < step)) {
        kept.push_back(line);
      }
    }
  }
  std::ofstream out(log, std::ios::trunc);
  for (const auto& l : kept) out << l << "\n";
  return kept.size();
}

class LogWriter {
 public:
  LogWriter(const fs::path& path, bool append) : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("cannot write loss log " + path.string());
  }
  void write(const IterationLog& log) {
    out_ << log.to_json().dump() << "\n";
    out_.flush();
    ++count_;
  }
  std::int64_t count() const noexcept { return count_; }

 private:
  std::ofstream out_;
  std::int64_t count_ = 0;
};

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::map<std::string, const metrics::NamedImage*> by_name(const std::vector<metrics::NamedImage>& set, const char* what) {
  std::map<std::string, const metrics::NamedImage*> out;
  for (const auto& n : set) {
    if (!out.emplace(n.name, &n).second) throw PairingError(std::string(what) + " set has duplicate name '" + n.name + "'");
  }
  return out;
}

}  // namespace

lumen::LumenData load_lumen_data(const CorpusManifest& m) {
  lumen::LumenData d;
  auto rd = m.select(CorpusRole::real_degraded, CorpusSplit::train);
  if (rd.empty()) rd = m.select(CorpusRole::paired_degraded, CorpusSplit::train);
  for (const auto* e : rd) d.real_degraded.push_back(l8_of(m.resolve(*e), LumDomain::real_degraded));
  for (const auto* e : m.select(CorpusRole::non_degraded, CorpusSplit::train)) {
    d.non_degraded.push_back(l8_of(m.resolve(*e), LumDomain::non_degraded));
  }
  for (const auto& [dg, cl] : m.pairs(CorpusSplit::train)) {
    d.pairs.emplace_back(l8_of(m.resolve(*dg), LumDomain::real_degraded), l8_of(m.resolve(*cl), LumDomain::non_degraded));
  }
  if (d.non_degraded.empty()) throw ManifestError("manifest has no non_degraded training images");
  if (d.real_degraded.empty()) throw ManifestError("manifest has no degraded training images");
  return d;
}

std::vector<LabImage> load_clean_images(const CorpusManifest& m) {
  std::vector<LabImage> out;
  for (const auto* e : m.select(CorpusRole::non_degraded, CorpusSplit::train)) out.push_back(rgb_to_lab(read_png(m.resolve(*e))));
  if (out.empty()) throw ManifestError("manifest has no non_degraded training images");
  return out;
}

EmpiricalCurve fit_curve_from_manifest(const CorpusManifest& m, int bins) {
  std::vector<std::pair<LuminancePlane, LuminancePlane>> pairs;
  for (const auto& [dg, cl] : m.pairs()) {
    pairs.emplace_back(LuminancePlane(l8_of(m.resolve(*dg), LumDomain::real_degraded), LumDomain::real_degraded),
                       LuminancePlane(l8_of(m.resolve(*cl), LumDomain::non_degraded), LumDomain::non_degraded));
  }
  if (pairs.empty()) throw EmptyInputError("manifest has no (degraded, clean) pairs to fit a curve on");
  return fit_empirical_curve(pairs, bins);
}

nlohmann::json provenance(const RunConfig& cfg, const std::string& seed_source) {
  return {{"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"seed_source", seed_source}};
}

TrainRunResult run_lumen_training(const RunConfig& cfg, const CorpusManifest& manifest, const TrainRunOptions& opts) {
  prepare_dir(opts.out_dir);
  lumen::LumenTrainer trainer(cfg.lumen, load_lumen_data(manifest));
  trainer.extra_meta = {{"provenance", opts.provenance}, {"run_config", cfg.to_json()}};
  TrainRunResult res{opts.out_dir / kLumenCheckpointName, opts.out_dir / kLossLogName, 0};
  bool append = false;
  if (opts.resume) {
    const auto ar = nn::Archive::load(*opts.resume);
    trainer.resume_from(ar);
    truncate_log(res.log, ar.meta.at("phase").get<std::string>(), ar.meta.at("step_count").get<std::int64_t>());
    append = true;
  }
  LogWriter writer(res.log, append);
  const auto ckpt = res.checkpoint;
  trainer.run(
      [&](const IterationLog& l) {
        writer.write(l);
        if (opts.echo) opts.echo(l);
      },
      [&](const lumen::LumenTrainer& t) { t.to_archive().save(ckpt); });
  trainer.to_archive().save(ckpt);
  res.iterations_run = writer.count();
  return res;
}

TrainRunResult run_hue_training(const RunConfig& cfg, const CorpusManifest& manifest, const TrainRunOptions& opts,
                                const std::optional<fs::path>& lumen_checkpoint) {
  std::shared_ptr<const lumen::LumenModel> lm;
  if (cfg.hue.luminance_source == hue::LuminanceSource::restored) {
    if (!lumen_checkpoint) {
      throw ConfigError("hue-train.luminance_source = \"restored\" needs a luminance checkpoint (--lumen-ckpt)");
    }
    if (!fs::exists(*lumen_checkpoint)) throw ConfigError("luminance checkpoint " + lumen_checkpoint->string() + " not found");
  }
  if (lumen_checkpoint) {
    lm = std::make_shared<const lumen::LumenModel>(lumen::LumenModel::from_archive(nn::Archive::load(*lumen_checkpoint)));
  }
  prepare_dir(opts.out_dir);
  hue::HueTrainer trainer(cfg.hue, load_clean_images(manifest), lm);
  trainer.extra_meta = {{"provenance", opts.provenance}, {"run_config", cfg.to_json()}};
  TrainRunResult res{opts.out_dir / kHueCheckpointName, opts.out_dir / kLossLogName, 0};
  bool append = false;
  if (opts.resume) {
    const auto ar = nn::Archive::load(*opts.resume);
    trainer.resume_from(ar);
    truncate_log(res.log, "hue", ar.meta.at("step_count").get<std::int64_t>());
    append = true;
  }
  LogWriter writer(res.log, append);
  const auto ckpt = res.checkpoint;
  trainer.train(
      [&](const IterationLog& l) {
        writer.write(l);
        if (opts.echo) opts.echo(l);
      },
      [&](const hue::HueTrainer& t) { t.to_archive().save(ckpt); });
  trainer.to_archive().save(ckpt);
  res.iterations_run = writer.count();
  return res;
}

LoadedModels load_models(const fs::path& lumen_ckpt, const fs::path& hue_ckpt) {
  LoadedModels m;
  m.lumen = std::make_shared<lumen::LumenModel>(lumen::LumenModel::from_archive(nn::Archive::load(lumen_ckpt)));
  m.hue = std::make_shared<hue::HueModel>(hue::HueModel::from_archive(nn::Archive::load(hue_ckpt)));
  return m;
}

hue::RestoreResult restore_image(const RgbImage& degraded, const LoadedModels& models, const PriorConfig& prior) {
  const int r = models.hue->resolution;
  if (degraded.width() != r || degraded.height() != r) {
    throw DimensionError("image is " + std::to_string(degraded.width()) + "x" + std::to_string(degraded.height()) +
                         " but the models were trained at " + std::to_string(r) + "x" + std::to_string(r));
  }
  return hue::restore_painting(rgb_to_lab(degraded), *models.lumen, models.hue->net, prior);
}

std::vector<metrics::NamedImage> load_image_set(const fs::path& source, bool degraded_side) {
  std::vector<metrics::NamedImage> out;
  if (fs::is_directory(source)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(source)) {
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back({f.stem().string(), read_png(f)});
  } else {
    const auto m = load_manifest(source);
    auto pairs = m.pairs(CorpusSplit::heldout);
    if (pairs.empty()) pairs = m.pairs();
    for (const auto& [dg, cl] : pairs) {
      const ManifestEntry* e = degraded_side ? dg : cl;
      out.push_back({*dg->pair_id, read_png(m.resolve(*e))});
    }
  }
  if (out.empty()) throw EmptyInputError("no images found in " + source.string());
  return out;
}

metrics::MetricReport evaluate_sets(std::vector<metrics::NamedImage> pred, std::vector<metrics::NamedImage> ref,
                                    const EvaluateConfig& cfg, const PriorConfig& prior,
                                    const std::optional<std::vector<metrics::NamedImage>>& mask_source) {
  const bool align = cfg.mode == metrics::EvalMode::paired || cfg.mask_policy == metrics::MaskPolicy::prior_mask;
  if (align) {
    const auto p = by_name(pred, "prediction"), r = by_name(ref, "reference");
    std::vector<std::string> missing;
    for (const auto& [name, _] : p) {
      if (!r.count(name)) missing.push_back("reference lacks '" + name + "'");
    }
    for (const auto& [name, _] : r) {
      if (!p.count(name)) missing.push_back("prediction lacks '" + name + "'");
    }
    if (!missing.empty()) {
      std::string msg = "prediction and reference sets are not aligned:";
      for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 5); ++i) msg += " " + missing[i] + ";";
      throw PairingError(msg);
    }
    std::vector<metrics::NamedImage> P, R;
    for (const auto& [name, img] : p) {
      P.push_back(*img);
      R.push_back(*r.at(name));
    }
    pred = std::move(P);
    ref = std::move(R);
  }
  std::vector<PriorMask> masks;
  if (cfg.mask_policy == metrics::MaskPolicy::prior_mask) {
    std::map<std::string, const metrics::NamedImage*> src;
    if (mask_source) src = by_name(*mask_source, "mask source");
    for (const auto& r : ref) {
      const metrics::NamedImage* s = &r;
      if (mask_source) {
        auto it = src.find(r.name);
        if (it == src.end()) throw PairingError("mask source lacks '" + r.name + "'");
        s = it->second;
      }
      masks.push_back(extract_color_prior(rgb_to_lab(s->image), prior, std::nullopt, SilkFallback::use_origin).mask);
    }
  }
  return metrics::evaluate(pred, ref, cfg.mode, cfg.mask_policy, masks, cfg.features);
}

}  // namespace previvor
