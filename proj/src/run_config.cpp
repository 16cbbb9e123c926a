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

#include "previvor/run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <toml.hpp>

#include "previvor/errors.hpp"
#include "previvor/rng.hpp"

namespace previvor {

namespace {

using nlohmann::json;

json range(double lo, double hi) { return json::array({lo, hi}); }

json schedule_keys(const nn::LrSchedule& s, const nn::AdamWConfig& a) {
  return {{"lr", s.initial},          {"lr_decay", s.decay_factor}, {"lr_milestones", s.milestones},
          {"adam_beta1", a.beta1},    {"adam_beta2", a.beta2},      {"weight_decay", a.weight_decay},
          {"adam_eps", a.eps}};
}

void read_schedule(const json& j, nn::LrSchedule& s, nn::AdamWConfig& a) {
  s.initial = j.at("lr").get<double>();
  s.decay_factor = j.at("lr_decay").get<double>();
  s.milestones = j.at("lr_milestones").get<std::vector<std::int64_t>>();
  a.beta1 = j.at("adam_beta1").get<double>();
  a.beta2 = j.at("adam_beta2").get<double>();
  a.weight_decay = j.at("weight_decay").get<double>();
  a.eps = j.at("adam_eps").get<double>();
}

const char* fallback_name(SilkFallback f) { return f == SilkFallback::use_origin ? "use_origin" : "fail"; }

std::string sublayer_name(hue::SubLayer s) {
  switch (s) {
    case hue::SubLayer::cross_attention: return "cross_attention";
    case hue::SubLayer::self_attention: return "self_attention";
    case hue::SubLayer::mlp: return "mlp";
  }
  return "";
}

json toml_to_json(const toml::node& n, const std::string& key) {
  if (auto t = n.as_table()) {
    json out = json::object();
    for (auto&& [k, v] : *t) {
      const std::string name(k.str());
      out[name] = toml_to_json(v, key.empty() ? name : key + "." + name);
    }
    return out;
  }
  if (auto a = n.as_array()) {
    json out = json::array();
    for (auto&& v : *a) out.push_back(toml_to_json(v, key));
    return out;
  }
  if (auto v = n.as_integer()) return v->get();
  if (auto v = n.as_floating_point()) return v->get();
  if (auto v = n.as_boolean()) return v->get();
  if (auto v = n.as_string()) return v->get();
  throw ConfigError("config key '" + key + "' has an unsupported value type");
}

std::string type_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "float";
  return j.type_name();
}

// Checks `given` against the default's shape and returns the value to store.
json conform(const json& given, const json& def, const std::string& key) {
  auto bad = [&] {
    return ConfigError("config key '" + key + "' expects " + type_name(def) + ", got " + type_name(given));
  };
  if (def.is_object()) {
    if (!given.is_object()) throw bad();
    json out = def;
    for (auto it = given.begin(); it != given.end(); ++it) {
      const std::string sub = key.empty() ? it.key() : key + "." + it.key();
      if (!def.contains(it.key())) throw ConfigError("unknown config key '" + sub + "'");
      out[it.key()] = conform(it.value(), def[it.key()], sub);
    }
    return out;
  }
  if (def.is_array()) {
    if (!given.is_array()) throw bad();
    json out = json::array();
    for (const auto& v : given) out.push_back(def.empty() ? v : conform(v, def[0], key + "[]"));
    return out;
  }
  if (def.is_boolean() && !given.is_boolean()) throw bad();
  if (def.is_string() && !given.is_string()) throw bad();
  if (def.is_number_integer()) {
    if (!given.is_number_integer()) throw bad();
    if (def.is_number_unsigned() && given.get<std::int64_t>() < 0) {
      throw ConfigError("config key '" + key + "' must be non-negative");
    }
  }
  if (def.is_number_float() && !given.is_number()) throw bad();
  if (def.is_number_float()) return given.get<double>();
  return given;
}

template <class T>
T enum_from(const json& j, const std::string& key, std::initializer_list<std::pair<const char*, T>> options) {
  const auto s = j.get<std::string>();
  std::string allowed;
  for (const auto& [name, v] : options) {
    if (s == name) return v;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError("config key '" + key + "' must be one of {" + allowed + "}, got '" + s + "'");
}

RunConfig from_dump(const json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.output_root = j.at("output_root").get<std::string>();

  const auto& co = j.at("corpus");
  c.corpus_n = co.at("n").get<int>();
  auto& s = c.corpus.synth;
  s.image_size = co.at("image_size").get<int>();
  s.silk_center = co.at("silk_center").get<std::array<double, 2>>();
  s.silk_jitter = co.at("silk_jitter").get<double>();
  s.silk_lightness = co.at("silk_lightness").get<std::array<double, 2>>();
  s.min_shapes = co.at("min_shapes").get<int>();
  s.max_shapes = co.at("max_shapes").get<int>();
  s.palette.clear();
  for (const auto& p : co.at("palette")) {
    if (p.size() != 3) throw ConfigError("corpus.palette entries must be [L, a, b]");
    s.palette.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
  }
  s.color_jitter = co.at("color_jitter").get<double>();
  s.texture_noise = co.at("texture_noise").get<double>();
  c.corpus.attenuate_chroma = co.at("attenuate_chroma").get<bool>();
  c.corpus.heldout_percent = co.at("heldout_percent").get<int>();

  const auto& dg = j.at("degrade");
  auto pair_of = [](const json& v, const char* key) {
    if (v.size() != 2) throw ConfigError(std::string("config key '") + key + "' must be [lo, hi]");
    return std::pair{v[0].get<double>(), v[1].get<double>()};
  };
  LinearRanges lr;
  std::tie(lr.alpha_lo, lr.alpha_hi) = pair_of(dg.at("alpha_range"), "degrade.alpha_range");
  std::tie(lr.beta_lo, lr.beta_hi) = pair_of(dg.at("beta_range"), "degrade.beta_range");
  c.corpus.degradation.linear_ranges = lr;
  c.lumen.linear_ranges = lr;
  c.curve_bins = dg.at("curve_bins").get<int>();
  c.lumen.curve_bins = c.curve_bins;
  c.lumen.empirical_probability = dg.at("empirical_probability").get<double>();

  const auto& pr = j.at("prior");
  c.prior.tau = pr.at("tau").get<double>();
  c.prior.k = pr.at("k").get<int>();
  c.prior.gradient_threshold = pr.at("gradient_threshold").get<double>();
  std::tie(c.prior.silk_box.a_lo, c.prior.silk_box.a_hi) = pair_of(pr.at("silk_box_a"), "prior.silk_box_a");
  std::tie(c.prior.silk_box.b_lo, c.prior.silk_box.b_hi) = pair_of(pr.at("silk_box_b"), "prior.silk_box_b");
  c.prior.kmeans_max_iters = pr.at("kmeans_max_iters").get<int>();
  c.silk_fallback = enum_from<SilkFallback>(pr.at("silk_fallback"), "prior.silk_fallback",
                                            {{"fail", SilkFallback::fail}, {"use_origin", SilkFallback::use_origin}});

  const auto& lu = j.at("lumen-train");
  auto& L = c.lumen;
  L.resolution = lu.at("resolution").get<int>();
  L.batch_size = lu.at("batch_size").get<int>();
  L.iterations = lu.at("iterations").get<int>();
  L.vae.base_channels = lu.at("vae_base_channels").get<std::size_t>();
  L.vae.latent_channels = lu.at("vae_latent_channels").get<std::size_t>();
  L.vae.depth = lu.at("vae_depth").get<int>();
  L.mapping.blocks = lu.at("mapping_blocks").get<int>();
  L.mapping.feature_dim = lu.at("mapping_feature_dim").get<std::size_t>();
  L.weights.lum_pixel = lu.at("lambda_pixel").get<double>();
  L.weights.lum_adv = lu.at("lambda_adv").get<double>();
  L.weights.lum_feat = lu.at("lambda_feat").get<double>();
  L.weights.lum_latent_adv = lu.at("lambda_latent_adv").get<double>();
  L.weights.kl = lu.at("lambda_kl").get<double>();
  L.weights.latent_l1 = lu.at("lambda_latent_l1").get<double>();
  read_schedule(lu, L.schedule, L.adamw);
  L.fit_curve_from_pairs = lu.at("fit_curve_from_pairs").get<bool>();
  L.disc_base = lu.at("disc_base").get<std::size_t>();
  L.disc_layers = lu.at("disc_layers").get<int>();
  L.latent_disc_hidden = lu.at("latent_disc_hidden").get<std::size_t>();
  L.flip_augment = lu.at("flip_augment").get<bool>();
  L.checkpoint_every = lu.at("checkpoint_every").get<int>();

  const auto& hu = j.at("hue-train");
  auto& H = c.hue;
  H.resolution = hu.at("resolution").get<int>();
  H.batch_size = hu.at("batch_size").get<int>();
  H.iterations = hu.at("iterations").get<int>();
  H.net.queries = hu.at("queries").get<std::size_t>();
  H.net.dim = hu.at("dim").get<std::size_t>();
  H.net.blocks = hu.at("blocks").get<int>();
  H.net.heads = hu.at("heads").get<std::size_t>();
  H.net.mlp_hidden = hu.at("mlp_hidden").get<std::size_t>();
  const auto ec = hu.at("encoder_channels");
  if (ec.size() != 4) throw ConfigError("hue-train.encoder_channels must list 4 stages");
  H.net.encoder_channels = ec.get<std::array<std::size_t, 4>>();
  H.net.block_order.clear();
  for (const auto& b : hu.at("block_order")) {
    H.net.block_order.push_back(enum_from<hue::SubLayer>(b, "hue-train.block_order",
                                                         {{"cross_attention", hue::SubLayer::cross_attention},
                                                          {"self_attention", hue::SubLayer::self_attention},
                                                          {"mlp", hue::SubLayer::mlp}}));
  }
  H.weights.pix = hu.at("lambda_pix").get<double>();
  H.weights.mask = hu.at("lambda_mask").get<double>();
  H.weights.per = hu.at("lambda_per").get<double>();
  H.weights.adv = hu.at("lambda_adv").get<double>();
  H.weights.col = hu.at("lambda_col").get<double>();
  read_schedule(hu, H.schedule, H.adamw);
  H.colorful_ref = hu.at("colorful_ref").get<double>();
  H.perceptual_seed = hu.at("perceptual_seed").get<std::uint64_t>();
  H.disc_base = hu.at("disc_base").get<std::size_t>();
  H.disc_layers = hu.at("disc_layers").get<int>();
  H.luminance_source = enum_from<hue::LuminanceSource>(
      hu.at("luminance_source"), "hue-train.luminance_source",
      {{"non_degraded", hue::LuminanceSource::non_degraded}, {"restored", hue::LuminanceSource::restored}});
  H.flip_augment = hu.at("flip_augment").get<bool>();
  H.checkpoint_every = hu.at("checkpoint_every").get<int>();
  H.prior = c.prior;

  const auto& ev = j.at("evaluate");
  c.evaluate.mode = enum_from<metrics::EvalMode>(ev.at("mode"), "evaluate.mode",
                                                 {{"paired", metrics::EvalMode::paired},
                                                  {"unpaired", metrics::EvalMode::unpaired}});
  c.evaluate.mask_policy = enum_from<metrics::MaskPolicy>(
      ev.at("mask_policy"), "evaluate.mask_policy",
      {{"none", metrics::MaskPolicy::none}, {"prior_mask", metrics::MaskPolicy::prior_mask}});
  c.evaluate.features.seed = ev.at("feature_seed").get<std::uint64_t>();
  c.evaluate.features.channels = ev.at("feature_channels").get<std::vector<std::size_t>>();
  const auto table = ev.at("embedding_table").get<std::string>();
  c.evaluate.features.kind = table.empty() ? metrics::FeatureExtractorSpec::Kind::random_conv_pyramid
                                           : metrics::FeatureExtractorSpec::Kind::external;
  c.evaluate.features.table = table;

  c.propagate_seed();
  c.validate();
  return c;
}

}  // namespace

void RunConfig::propagate_seed() {
  corpus.synth.seed = mix_seed(seed, 101);
  prior.kmeans_seed = mix_seed(seed, 102);
  hue.prior = prior;
  lumen.seed = mix_seed(seed, 103);
  hue.seed = mix_seed(seed, 104);
}

void RunConfig::validate() const {
  if (corpus_n < 1) throw ConfigError("corpus.n must be >= 1");
  if (curve_bins < 1) throw ConfigError("degrade.curve_bins must be >= 1");
  corpus.validate();
  prior.validate();
  lumen.validate();
  hue.validate();
  if (evaluate.features.channels.empty()) throw ConfigError("evaluate.feature_channels must not be empty");
}

json RunConfig::to_json() const {
  const auto& s = corpus.synth;
  json palette = json::array();
  for (const auto& p : s.palette) palette.push_back({p.L, p.a, p.b});
  const auto& lr = lumen.linear_ranges;
  json order = json::array();
  for (auto b : hue.net.block_order) order.push_back(sublayer_name(b));

  json lu{{"resolution", lumen.resolution},
          {"batch_size", lumen.batch_size},
          {"iterations", lumen.iterations},
          {"vae_base_channels", lumen.vae.base_channels},
          {"vae_latent_channels", lumen.vae.latent_channels},
          {"vae_depth", lumen.vae.depth},
          {"mapping_blocks", lumen.mapping.blocks},
          {"mapping_feature_dim", lumen.mapping.feature_dim},
          {"lambda_pixel", lumen.weights.lum_pixel},
          {"lambda_adv", lumen.weights.lum_adv},
          {"lambda_feat", lumen.weights.lum_feat},
          {"lambda_latent_adv", lumen.weights.lum_latent_adv},
          {"lambda_kl", lumen.weights.kl},
          {"lambda_latent_l1", lumen.weights.latent_l1},
          {"fit_curve_from_pairs", lumen.fit_curve_from_pairs},
          {"disc_base", lumen.disc_base},
          {"disc_layers", lumen.disc_layers},
          {"latent_disc_hidden", lumen.latent_disc_hidden},
          {"flip_augment", lumen.flip_augment},
          {"checkpoint_every", lumen.checkpoint_every}};
  lu.update(schedule_keys(lumen.schedule, lumen.adamw));

  json hu{{"resolution", hue.resolution},
          {"batch_size", hue.batch_size},
          {"iterations", hue.iterations},
          {"queries", hue.net.queries},
          {"dim", hue.net.dim},
          {"blocks", hue.net.blocks},
          {"heads", hue.net.heads},
          {"mlp_hidden", hue.net.mlp_hidden},
          {"encoder_channels", hue.net.encoder_channels},
          {"block_order", order},
          {"lambda_pix", hue.weights.pix},
          {"lambda_mask", hue.weights.mask},
          {"lambda_per", hue.weights.per},
          {"lambda_adv", hue.weights.adv},
          {"lambda_col", hue.weights.col},
          {"colorful_ref", hue.colorful_ref},
          {"perceptual_seed", hue.perceptual_seed},
          {"disc_base", hue.disc_base},
          {"disc_layers", hue.disc_layers},
          {"luminance_source", hue.luminance_source == hue::LuminanceSource::restored ? "restored" : "non_degraded"},
          {"flip_augment", hue.flip_augment},
          {"checkpoint_every", hue.checkpoint_every}};
  hu.update(schedule_keys(hue.schedule, hue.adamw));

  return {{"seed", seed},
          {"output_root", output_root},
          {"corpus",
           {{"n", corpus_n},
            {"image_size", s.image_size},
            {"silk_center", s.silk_center},
            {"silk_jitter", s.silk_jitter},
            {"silk_lightness", s.silk_lightness},
            {"min_shapes", s.min_shapes},
            {"max_shapes", s.max_shapes},
            {"palette", palette},
            {"color_jitter", s.color_jitter},
            {"texture_noise", s.texture_noise},
            {"attenuate_chroma", corpus.attenuate_chroma},
            {"heldout_percent", corpus.heldout_percent}}},
          {"degrade",
           {{"alpha_range", range(lr.alpha_lo, lr.alpha_hi)},
            {"beta_range", range(lr.beta_lo, lr.beta_hi)},
            {"curve_bins", curve_bins},
            {"empirical_probability", lumen.empirical_probability}}},
          {"prior",
           {{"tau", prior.tau},
            {"k", prior.k},
            {"gradient_threshold", prior.gradient_threshold},
            {"silk_box_a", range(prior.silk_box.a_lo, prior.silk_box.a_hi)},
            {"silk_box_b", range(prior.silk_box.b_lo, prior.silk_box.b_hi)},
            {"kmeans_max_iters", prior.kmeans_max_iters},
            {"silk_fallback", fallback_name(silk_fallback)}}},
          {"lumen-train", lu},
          {"hue-train", hu},
          {"evaluate",
           {{"mode", evaluate.mode == metrics::EvalMode::paired ? "paired" : "unpaired"},
            {"mask_policy", metrics::to_string(evaluate.mask_policy)},
            {"feature_seed", evaluate.features.seed},
            {"feature_channels", evaluate.features.channels},
            {"embedding_table", evaluate.features.kind == metrics::FeatureExtractorSpec::Kind::external
                                    ? evaluate.features.table.string()
                                    : std::string{}}}}};
}

std::string RunConfig::hash() const {
  const std::string dump = to_json().dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(dump.data(), dump.size())));
  return buf;
}

RunConfig parse_run_config(const std::string& toml_text, const std::string& origin) {
  toml::table tbl;
  try {
    tbl = toml::parse(toml_text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << origin << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
  RunConfig defaults;
  const json merged = conform(toml_to_json(tbl, ""), defaults.to_json(), "");
  try {
    return from_dump(merged);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

bool toml_sets_seed(const std::string& toml_text) {
  try {
    return toml::parse(toml_text).contains("seed");
  } catch (const toml::parse_error&) {
    return false;
  }
}

SeedResolution resolve_seed(RunConfig& cfg, bool config_has_seed, std::optional<std::uint64_t> flag) {
  SeedResolution r{cfg.seed, "default"};
  if (flag) {
    r = {*flag, "flag"};
  } else if (config_has_seed) {
    r = {cfg.seed, "config"};
  } else if (const char* env = std::getenv("PREVIVOR_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::char_traits<char>::length(env)) throw std::invalid_argument("trailing");
      r = {v, "env"};
    } catch (const std::exception&) {
      throw ConfigError(std::string("PREVIVOR_SEED must be a non-negative integer, got '") + env + "'");
    }
  } else {
    r = {0, "default"};
  }
  cfg.seed = r.seed;
  cfg.propagate_seed();
  return r;
}

RunConfig toy_run_config() {
  RunConfig c;
  c.corpus_n = 240;  // enough for 20+ held-out pairs at a 10% split
  c.lumen.mapping.feature_dim = 64;
  c.propagate_seed();
  return c;
}

}  // namespace previvor
