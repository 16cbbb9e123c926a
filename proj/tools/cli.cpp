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

#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "previvor/errors.hpp"
#include "previvor/pipeline.hpp"
#include "previvor/png_io.hpp"

namespace previvor::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Loaded {
  RunConfig cfg;
  SeedResolution seed;
  json provenance;
};

Loaded load_config(const std::string& path, const CLI::Option* seed_opt, std::uint64_t seed_flag) {
  Loaded l;
  bool has_seed = false;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    l.cfg = parse_run_config(ss.str(), path);
    has_seed = toml_sets_seed(ss.str());
  }
  l.seed = resolve_seed(l.cfg, has_seed, seed_opt->count() ? std::optional<std::uint64_t>(seed_flag) : std::nullopt);
  l.cfg.validate();
  l.provenance = provenance(l.cfg, l.seed.source);
  return l;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_text(const fs::path& path, const std::string& s) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << s;
}

LogSink progress(std::ostream& err) {
  return [&err](const IterationLog& l) {
    if (l.iteration % 25 == 0) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "[%s %5lld] total %.4f  disc %.4f", l.phase.c_str(),
                    static_cast<long long>(l.iteration), l.total, l.disc);
      err << buf << "\n";
    }
  };
}

struct Options {
  std::string config, out, corpus, resume, lumen_ckpt, hue_ckpt, image, pairs, out_mask, out_silk, bg_mask;
  std::string pred, ref, mode, mask_policy, mask_source, side_info;
  int n = -1;
  int bins = kDefaultCurveBins;
  std::uint64_t seed = 0;
};

int cmd_make_corpus(const Options& o, const CLI::Option* seed_opt, std::ostream& out) {
  auto l = load_config(o.config, seed_opt, o.seed);
  const int n = o.n >= 0 ? o.n : l.cfg.corpus_n;
  if (n < 1) throw UsageError("--n must be >= 1");
  const auto m = build_training_corpus(l.cfg.corpus, n, o.out);
  write_json(fs::path(o.out) / "run_info.json",
             {{"command", "make-corpus"}, {"n", n}, {"provenance", l.provenance}, {"config", l.cfg.to_json()}});
  out << "wrote " << m.entries.size() << " images and " << (fs::path(o.out) / "manifest.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_fit_curve(const Options& o, const CLI::Option* seed_opt, std::ostream& out) {
  if (o.bins < 1) throw UsageError("--bins must be >= 1");
  auto l = load_config(o.config, seed_opt, o.seed);
  const auto curve = fit_curve_from_manifest(load_manifest(o.pairs), o.bins);
  json j = curve.to_json();
  j["provenance"] = l.provenance;
  write_json(o.out, j);
  std::size_t populated = 0;
  for (std::size_t b = 0; b < curve.bins(); ++b) populated += curve.populated(b);
  out << "fitted " << curve.bins() << " bins (" << populated << " populated) -> " << o.out << "\n";
  return kExitOk;
}

int cmd_extract_prior(const Options& o, const CLI::Option* seed_opt, std::ostream& out) {
  auto l = load_config(o.config, seed_opt, o.seed);
  const LabImage img = rgb_to_lab(read_png(o.image));
  std::optional<PriorMask> bg;
  if (!o.bg_mask.empty()) bg = read_mask_png(o.bg_mask);
  const auto ex = extract_color_prior(img, l.cfg.prior, bg, l.cfg.silk_fallback);
  if (!o.out_mask.empty()) {
    if (fs::path(o.out_mask).has_parent_path()) fs::create_directories(fs::path(o.out_mask).parent_path());
    write_mask_png(o.out_mask, ex.mask);
  }
  json silk{{"silk", ex.silk.to_json()},
            {"silk_fallback", ex.silk_fallback},
            {"candidate_count", ex.candidate_count},
            {"mask", {{"count", ex.mask.count()}, {"fraction", ex.mask.fraction()}}},
            {"provenance", l.provenance}};
  if (!o.out_silk.empty()) write_json(o.out_silk, silk);
  out << "silk (a, b) = (" << ex.silk.c_silk[0] << ", " << ex.silk.c_silk[1] << "), mask fraction "
      << ex.mask.fraction() << "\n";
  return kExitOk;
}

int cmd_train(const Options& o, const CLI::Option* seed_opt, bool hue_stage, std::ostream& out, std::ostream& err) {
  auto l = load_config(o.config, seed_opt, o.seed);
  if (hue_stage && l.cfg.hue.luminance_source == hue::LuminanceSource::restored) {
    if (o.lumen_ckpt.empty()) {
      throw ConfigError("hue-train.luminance_source = \"restored\" needs --lumen-ckpt");
    }
    if (!fs::exists(o.lumen_ckpt)) throw ConfigError("luminance checkpoint " + o.lumen_ckpt + " not found");
  }
  const auto manifest = load_manifest(o.corpus);
  TrainRunOptions opts;
  opts.out_dir = o.out;
  if (!o.resume.empty()) opts.resume = o.resume;
  opts.provenance = l.provenance;
  opts.echo = progress(err);
  const auto res = hue_stage ? run_hue_training(l.cfg, manifest, opts,
                                                o.lumen_ckpt.empty() ? std::nullopt
                                                                     : std::optional<fs::path>(o.lumen_ckpt))
                             : run_lumen_training(l.cfg, manifest, opts);
  out << "ran " << res.iterations_run << " iterations; checkpoint " << res.checkpoint.string() << ", log "
      << res.log.string() << "\n";
  return kExitOk;
}

int cmd_restore(const Options& o, const CLI::Option* seed_opt, std::ostream& out) {
  auto l = load_config(o.config, seed_opt, o.seed);
  const RgbImage input = read_png(o.image);
  LoadedModels models;
  try {
    models = load_models(o.lumen_ckpt, o.hue_ckpt);
  } catch (const Error& e) {
    throw StageError("load", e.what());
  }
  const auto r = restore_image(input, models, l.cfg.prior);
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  write_png(o.out, r.rgb);
  json side = r.side_info();
  side["provenance"] = l.provenance;
  const fs::path side_path = o.side_info.empty() ? fs::path(o.out).replace_extension(".json") : fs::path(o.side_info);
  write_json(side_path, side);
  out << "restored " << o.image << " -> " << o.out << "\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, const CLI::Option* seed_opt, std::ostream& out) {
  auto l = load_config(o.config, seed_opt, o.seed);
  EvaluateConfig ec = l.cfg.evaluate;
  if (!o.mode.empty()) ec.mode = o.mode == "paired" ? metrics::EvalMode::paired : metrics::EvalMode::unpaired;
  if (!o.mask_policy.empty()) ec.mask_policy = *metrics::mask_policy_from_string(o.mask_policy);
  std::optional<std::vector<metrics::NamedImage>> masks;
  if (!o.mask_source.empty()) masks = load_image_set(o.mask_source, true);
  auto report = evaluate_sets(load_image_set(o.pred, true), load_image_set(o.ref, false), ec, l.cfg.prior, masks);
  report.provenance = l.provenance;
  report.provenance["pred"] = o.pred;
  report.provenance["ref"] = o.ref;
  write_json(o.out, report.to_json());
  const std::string table = report.to_table();
  write_text(fs::path(o.out).replace_extension(".txt"), table);
  out << table;
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"previvor: restoration of faded silk paintings"};
  app.require_subcommand(1);
  Options o;

  auto seed_option = [&](CLI::App* sub) {
    return sub->add_option("--seed", o.seed, "Global seed (overrides config and PREVIVOR_SEED)");
  };
  auto config_option = [&](CLI::App* sub) {
    return sub->add_option("--config", o.config, "TOML run configuration")->check(CLI::ExistingFile);
  };

  auto* mk = app.add_subcommand("make-corpus", "Generate a synthetic paired corpus and manifest");
  config_option(mk);
  mk->add_option("--out", o.out, "Output directory")->required();
  mk->add_option("--n", o.n, "Number of paintings (default: corpus.n)");
  auto* mk_seed = seed_option(mk);

  auto* fc = app.add_subcommand("fit-curve", "Fit an empirical degradation curve from paired images");
  fc->add_option("--pairs", o.pairs, "Corpus manifest with paired entries")->required()->check(CLI::ExistingFile);
  fc->add_option("--bins", o.bins, "Number of luminance bins");
  fc->add_option("--out", o.out, "Curve JSON path")->required();
  config_option(fc);
  auto* fc_seed = seed_option(fc);

  auto* ep = app.add_subcommand("extract-prior", "Compute the silk colour and prior mask of one image");
  ep->add_option("--image", o.image, "Input PNG")->required()->check(CLI::ExistingFile);
  config_option(ep);
  ep->add_option("--out-mask", o.out_mask, "1-bit mask PNG");
  ep->add_option("--out-silk", o.out_silk, "Silk estimate JSON");
  ep->add_option("--bg-mask", o.bg_mask, "External background mask PNG (1 = background)")->check(CLI::ExistingFile);
  auto* ep_seed = seed_option(ep);

  auto* tl = app.add_subcommand("train-lumen", "Train the luminance enhancement stage");
  config_option(tl);
  tl->add_option("--corpus", o.corpus, "Corpus manifest")->required()->check(CLI::ExistingFile);
  tl->add_option("--out", o.out, "Output directory")->required();
  tl->add_option("--resume", o.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  auto* tl_seed = seed_option(tl);

  auto* th = app.add_subcommand("train-hue", "Train the hue correction stage");
  config_option(th);
  th->add_option("--corpus", o.corpus, "Corpus manifest")->required()->check(CLI::ExistingFile);
  th->add_option("--out", o.out, "Output directory")->required();
  th->add_option("--resume", o.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  th->add_option("--lumen-ckpt", o.lumen_ckpt, "Luminance checkpoint (needed for restored luminance)");
  auto* th_seed = seed_option(th);

  auto* rs = app.add_subcommand("restore", "Restore one degraded painting");
  rs->add_option("--image", o.image, "Degraded PNG")->required()->check(CLI::ExistingFile);
  rs->add_option("--lumen-ckpt", o.lumen_ckpt, "Luminance checkpoint")->required()->check(CLI::ExistingFile);
  rs->add_option("--hue-ckpt", o.hue_ckpt, "Hue checkpoint")->required()->check(CLI::ExistingFile);
  config_option(rs);
  rs->add_option("--out", o.out, "Restored PNG")->required();
  rs->add_option("--side-info", o.side_info, "Side-channel JSON (default: <out>.json)");
  auto* rs_seed = seed_option(rs);

  auto* ev = app.add_subcommand("evaluate", "Compute the metric report for a prediction set");
  ev->add_option("--pred", o.pred, "Prediction directory or manifest")->required()->check(CLI::ExistingPath);
  ev->add_option("--ref", o.ref, "Reference directory or manifest")->required()->check(CLI::ExistingPath);
  ev->add_option("--mode", o.mode, "paired or unpaired")->check(CLI::IsMember({"paired", "unpaired"}));
  ev->add_option("--mask-policy", o.mask_policy, "none or prior_mask")->check(CLI::IsMember({"none", "prior_mask"}));
  ev->add_option("--mask-source", o.mask_source, "Images the prior masks are computed from (default: --ref)")
      ->check(CLI::ExistingPath);
  ev->add_option("--out", o.out, "Report JSON (table written next to it as .txt)")->required();
  config_option(ev);
  auto* ev_seed = seed_option(ev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*mk) return cmd_make_corpus(o, mk_seed, out);
    if (*fc) return cmd_fit_curve(o, fc_seed, out);
    if (*ep) return cmd_extract_prior(o, ep_seed, out);
    if (*tl) return cmd_train(o, tl_seed, false, out, err);
    if (*th) return cmd_train(o, th_seed, true, out, err);
    if (*rs) return cmd_restore(o, rs_seed, out);
    if (*ev) return cmd_evaluate(o, ev_seed, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const StageError& e) {
    err << "stage '" << e.stage() << "' failed: " << e.what() << "\n";
    return kExitFailure;
  } catch (const NoSilkFoundError& e) {
    err << "silk estimation failed: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace previvor::cli
