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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
//   acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "previvor/corpus.hpp"
#include "previvor/degrade.hpp"
#include "previvor/image.hpp"
#include "previvor/metrics.hpp"
#include "previvor/pipeline.hpp"
#include "previvor/prior.hpp"
#include "previvor/rng.hpp"
#include "previvor/run_config.hpp"

using namespace previvor;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  if (!o.pass) ++g_failures;
  std::printf("criterion %2d %-28s %s  %s\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------- 1

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const std::string cmd = std::string("\"") + PREVIVOR_GRADIENT_SUITE +
                          "\" --test-case=\"*finite differences*\" --minimal > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  const double s = seconds_since(t0);
  return {rc == 0 && s < 120.0, fmt("exit %d, %.1f s (limit 120 s)", rc, s)};
}

// ---------------------------------------------------------------- 2

Outcome curve_recovery() {
  const double alpha = 0.35, beta = 20.0;
  const int n = 64;
  Plane ramp(n, n);
  for (int i = 0; i < n * n; ++i) ramp.values()[static_cast<std::size_t>(i)] = 255.0 * i / (n * n - 1);
  const LuminancePlane clean(ramp, LumDomain::non_degraded);
  const LuminancePlane faded = apply_linear_degradation(clean, LinearCurveParams(alpha, beta));
  const auto curve = fit_empirical_curve({{faded, clean}}, 32);
  double worst = 0.0;
  int checked = 0;
  for (std::size_t b = 0; b < curve.bins(); ++b) {
    if (!curve.populated(b)) continue;
    const double c = curve.center(b);
    const double line = alpha * c + beta;
    if (line <= 0.0 || line >= 255.0) continue;  // clamped bin
    worst = std::max(worst, std::abs(curve.mean_delta[b] - (line - c)));
    ++checked;
  }
  return {checked == 32 && worst <= 1.0, fmt("%d bins checked, worst error %.4f L8 (limit 1.0)", checked, worst)};
}

// ---------------------------------------------------------------- 3

Outcome prior_mask_oracle() {
  Rng rng(2026);
  int exact = 0;
  for (int k = 0; k < 100; ++k) {
    Plane L(32, 32), a(32, 32), b(32, 32);
    for (auto& v : L.values()) v = rng.uniform(0.0, 100.0);
    for (auto& v : a.values()) v = rng.uniform(-128.0, 127.0);
    for (auto& v : b.values()) v = rng.uniform(-128.0, 127.0);
    const LabImage img(L, a, b);
    const std::array<double, 2> silk{rng.uniform(-5.0, 25.0), rng.uniform(0.0, 40.0)};
    const double tau = rng.uniform(5.0, 60.0);
    const PriorMask got = compute_prior_mask(img, silk, tau);
    bool same = true;
    for (int r = 0; r < 32 && same; ++r) {
      for (int c = 0; c < 32; ++c) {
        const bool far = std::hypot(a(r, c) - silk[0], b(r, c) - silk[1]) > tau;
        if ((got(r, c) != 0) != far) {
          same = false;
          break;
        }
      }
    }
    exact += same;
  }
  return {exact == 100, fmt("%d/100 images bit-exact", exact)};
}

// ---------------------------------------------------------------- 4

double direct_colorfulness(const RgbImage& img) {
  const double n = static_cast<double>(img.width()) * img.height();
  double mrg = 0, myb = 0;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      mrg += double(img.at(r, c, 0)) - img.at(r, c, 1);
      myb += 0.5 * (double(img.at(r, c, 0)) + img.at(r, c, 1)) - img.at(r, c, 2);
    }
  }
  mrg /= n;
  myb /= n;
  double vrg = 0, vyb = 0;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      const double rg = double(img.at(r, c, 0)) - img.at(r, c, 1) - mrg;
      const double yb = 0.5 * (double(img.at(r, c, 0)) + img.at(r, c, 1)) - img.at(r, c, 2) - myb;
      vrg += rg * rg;
      vyb += yb * yb;
    }
  }
  return std::sqrt(vrg / n + vyb / n) + 0.3 * std::sqrt(mrg * mrg + myb * myb);
}

Outcome colorfulness_oracle() {
  Rng rng(404);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int w = 4 + static_cast<int>(rng.index(29)), h = 4 + static_cast<int>(rng.index(29));
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h * 3));
    for (auto& p : px) p = static_cast<std::uint8_t>(rng.index(256));
    const RgbImage img(w, h, std::move(px));
    worst = std::max(worst, std::abs(metrics::colorfulness(img) - direct_colorfulness(img)));
  }
  int zero = 0;
  for (int k = 0; k < 20; ++k) {
    std::vector<std::uint8_t> px;
    for (int i = 0; i < 100; ++i) {
      const auto v = static_cast<std::uint8_t>(rng.index(256));
      px.insert(px.end(), {v, v, v});
    }
    zero += metrics::colorfulness(RgbImage(10, 10, std::move(px))) == 0.0;
  }
  return {worst < 1e-9 && zero == 20, fmt("worst |diff| %.2e over 100 images, %d/20 gray images exactly 0", worst, zero)};
}

// ---------------------------------------------------------------- 5

Outcome fid_oracle() {
  // Commuting (diagonal) covariances: the closed form is a per-axis sum.
  Rng rng(55);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    const std::size_t d = 6;
    std::vector<double> mu_a(d), mu_b(d), va(d), vb(d);
    std::vector<std::vector<double>> A(d, std::vector<double>(d, 0.0)), B = A;
    double closed = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      mu_a[i] = rng.uniform(-2, 2);
      mu_b[i] = rng.uniform(-2, 2);
      A[i][i] = va[i] = rng.uniform(0.1, 3.0);
      B[i][i] = vb[i] = rng.uniform(0.1, 3.0);
      const double x = va[i] + metrics::kFidEpsilon, y = vb[i] + metrics::kFidEpsilon;
      closed += (mu_a[i] - mu_b[i]) * (mu_a[i] - mu_b[i]) + x + y - 2.0 * std::sqrt(x * y);
    }
    worst = std::max(worst, std::abs(metrics::frechet_distance(mu_a, A, mu_b, B) - closed));
  }
  // Sampled embeddings: same set twice.
  metrics::Embeddings s;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> v(8);
    for (auto& x : v) x = rng.normal();
    s.push_back(v);
  }
  const double self = metrics::frechet_distance(s, s);
  return {worst < 1e-6 && self < 1e-6, fmt("worst closed-form error %.2e, fid(S,S) = %.2e", worst, self)};
}

// ---------------------------------------------------------------- 6

Outcome lab_lattice() {
  int total = 0, exact = 0;
  for (int r = 0; r < 256; r += 17) {
    for (int g = 0; g < 256; g += 17) {
      for (int b = 0; b < 256; b += 17) {
        const auto lab = srgb_to_lab(static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b));
        const auto rgb = lab_to_srgb(lab[0], lab[1], lab[2]);
        ++total;
        exact += rgb[0] == r && rgb[1] == g && rgb[2] == b;
      }
    }
  }
  return {exact == total, fmt("%d/%d lattice colours round-trip exactly", exact, total)};
}

// ---------------------------------------------------------------- 11

Outcome hyperparameters() {
  const auto j = RunConfig{}.to_json();
  std::vector<std::string> bad;
  auto expect = [&](const std::string& sec, const std::string& key, const nlohmann::json& v) {
    if (j.at(sec).at(key) != v) bad.push_back(sec + "." + key + "=" + j.at(sec).at(key).dump());
  };
  expect("hue-train", "lambda_pix", 0.1);
  expect("hue-train", "lambda_mask", 1.0);
  expect("hue-train", "lambda_per", 5.0);
  expect("hue-train", "lambda_adv", 1.0);
  expect("hue-train", "lambda_col", 0.5);
  for (const char* sec : {"hue-train", "lumen-train"}) {
    expect(sec, "adam_beta1", 0.9);
    expect(sec, "adam_beta2", 0.99);
    expect(sec, "weight_decay", 0.01);
    expect(sec, "lr", 1e-4);
    expect(sec, "lr_decay", 0.5);
    expect(sec, "lr_milestones", nlohmann::json::array({4000, 8000, 12000, 16000, 20000}));
  }
  expect("lumen-train", "mapping_blocks", 6);
  expect("lumen-train", "mapping_feature_dim", 512);
  expect("lumen-train", "lambda_latent_l1", 60.0);
  std::string detail = bad.empty() ? "all 22 published values match the default dump" : "mismatch:";
  for (const auto& b : bad) detail += " " + b;
  return {bad.empty(), detail};
}

// ---------------------------------------------------------------- 7-10

struct Cli {
  int code;
  std::string out, err;
};

Cli cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "previvor");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void must(const Cli& r, const std::string& what) {
  if (r.code != 0) throw std::runtime_error(what + " failed (exit " + std::to_string(r.code) + "): " + r.err);
}

struct ChainRun {
  double lumen_seconds = 0.0, hue_seconds = 0.0;
  std::size_t eval_pairs = 0;
};

// Runs the full toy pipeline through the command-line layer inside `dir`.
ChainRun run_chain(const fs::path& dir, const std::string& config) {
  ChainRun run;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string corpus = (dir / "corpus").string(), manifest = (dir / "corpus" / "manifest.jsonl").string();
  must(cli_run({"make-corpus", "--config", config, "--out", corpus}), "make-corpus");

  auto t0 = Clock::now();
  must(cli_run({"train-lumen", "--config", config, "--corpus", manifest, "--out", (dir / "lumen").string()}),
       "train-lumen");
  run.lumen_seconds = seconds_since(t0);
  t0 = Clock::now();
  must(cli_run({"train-hue", "--config", config, "--corpus", manifest, "--out", (dir / "hue").string()}), "train-hue");
  run.hue_seconds = seconds_since(t0);

  // The first 20 held-out pairs, by pair id.
  const auto m = load_manifest(manifest);
  auto pairs = m.pairs(CorpusSplit::heldout);
  std::sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) { return *x.first->pair_id < *y.first->pair_id; });
  if (pairs.size() > 20) pairs.resize(20);
  run.eval_pairs = pairs.size();
  const fs::path ev = dir / "eval";
  for (const char* sub : {"degraded", "gt", "restored", "side"}) fs::create_directories(ev / sub);
  for (const auto& [deg, clean] : pairs) {
    const std::string id = *deg->pair_id;
    fs::copy_file(m.resolve(*deg), ev / "degraded" / (id + ".png"));
    fs::copy_file(m.resolve(*clean), ev / "gt" / (id + ".png"));
    must(cli_run({"restore", "--config", config, "--image", (ev / "degraded" / (id + ".png")).string(), "--lumen-ckpt",
                  (dir / "lumen" / kLumenCheckpointName).string(), "--hue-ckpt",
                  (dir / "hue" / kHueCheckpointName).string(), "--out", (ev / "restored" / (id + ".png")).string(),
                  "--side-info", (ev / "side" / (id + ".json")).string()}),
         "restore " + id);
  }
  for (const char* set : {"restored", "degraded"}) {
    must(cli_run({"evaluate", "--config", config, "--pred", (ev / set).string(), "--ref", (ev / "gt").string(),
                  "--mode", "paired", "--out", (ev / (std::string(set) + "_paired.json")).string()}),
         std::string("evaluate paired ") + set);
    must(cli_run({"evaluate", "--config", config, "--pred", (ev / set).string(), "--ref", (ev / "gt").string(),
                  "--mode", "unpaired", "--out", (ev / (std::string(set) + "_unpaired.json")).string()}),
         std::string("evaluate unpaired ") + set);
  }
  return run;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream f(p);
  return nlohmann::json::parse(f);
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// Per-phase first/last 50-iteration means of the total generator loss. Every
// numeric field of every line must be finite.
Outcome loss_decrease(const fs::path& log, double seconds) {
  std::map<std::string, std::vector<double>> totals;
  std::vector<std::string> order;
  bool finite = true;
  std::ifstream f(log);
  for (std::string line; std::getline(f, line);) {
    const auto j = nlohmann::json::parse(line);
    const std::string phase = j.at("phase");
    if (!totals.count(phase)) order.push_back(phase);
    const double t = j.at("total").get<double>();
    finite = finite && std::isfinite(t);
    for (const auto& [k, v] : j.items()) {
      if (v.is_number()) finite = finite && std::isfinite(v.get<double>());
    }
    totals[phase].push_back(t);
  }
  bool pass = finite && seconds < 900.0 && !order.empty();
  std::string detail;
  for (const auto& p : order) {
    const auto& v = totals[p];
    if (v.size() < 100) {
      pass = false;
      detail += p + ": only " + std::to_string(v.size()) + " iterations; ";
      continue;
    }
    double first = 0, last = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      first += v[i] / 50.0;
      last += v[v.size() - 50 + i] / 50.0;
    }
    pass = pass && last < first;
    detail += fmt("%s %zu it %.3f -> %.3f; ", p.c_str(), v.size(), first, last);
  }
  detail += fmt("%s, %.0f s (limit 900 s)", finite ? "all finite" : "NON-FINITE", seconds);
  return {pass, detail};
}

Outcome improvement(const fs::path& ev, std::size_t pairs) {
  const auto rest = read_json(ev / "restored_paired.json"), deg = read_json(ev / "degraded_paired.json");
  std::map<std::string, double> deg_psnr;
  for (const auto& r : deg["images"]) deg_psnr[r["name"]] = r["psnr"].get<double>();
  std::size_t better = 0, n = 0;
  for (const auto& r : rest["images"]) {
    ++n;
    better += r["psnr"].is_number() ? r["psnr"].get<double>() > deg_psnr.at(r["name"]) : true;
  }
  const double dc_rest = rest["summary"]["delta_colorfulness"], dc_deg = deg["summary"]["delta_colorfulness"];
  const bool pass = pairs >= 20 && n == pairs && better * 10 >= n * 8 && dc_rest < dc_deg;
  return {pass, fmt("%zu/%zu held-out pairs gain PSNR (mean %.2f -> %.2f dB); mean dColorfulness %.2f -> %.2f", better,
                    n, deg["summary"]["psnr"].get<double>(), rest["summary"]["psnr"].get<double>(), dc_deg, dc_rest)};
}

Outcome fid_ordering(const fs::path& ev) {
  const auto rest = read_json(ev / "restored_unpaired.json"), deg = read_json(ev / "degraded_unpaired.json");
  const double fr = rest["summary"]["fid"], fd = deg["summary"]["fid"];
  return {fr < fd, fmt("FID restored %.3f < degraded %.3f (%s)", fr, fd,
                       rest["feature_extractor"].get<std::string>().c_str())};
}

Outcome determinism(const fs::path& a, const fs::path& b) {
  // Side-info files carry wall-clock timings and are excluded.
  std::size_t compared = 0;
  std::vector<std::string> differ;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    if (*rel.begin() == "eval" && rel.parent_path().filename() == "side") continue;
    ++compared;
    if (!fs::exists(b / rel) || bytes_of(e.path()) != bytes_of(b / rel)) differ.push_back(rel.string());
  }
  std::string detail = fmt("%zu files compared (corpus, checkpoints, logs, restored images, reports)", compared);
  if (!differ.empty()) detail += fmt("; %zu differ, first: %s", differ.size(), differ.front().c_str());
  return {differ.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "previvor_acceptance";
  const std::string config = std::string(PREVIVOR_SOURCE_DIR) + "/configs/toy.toml";
  ::unsetenv("PREVIVOR_SEED");
  std::printf("acceptance run in %s with %s\n", work.string().c_str(), config.c_str());

  report(1, "gradient suite", gradient_suite());
  report(2, "curve recovery", curve_recovery());
  report(3, "prior mask oracle", prior_mask_oracle());
  report(4, "colorfulness oracle", colorfulness_oracle());
  report(5, "FID oracle", fid_oracle());
  report(6, "Lab lattice round trip", lab_lattice());

  // Both chains run in the same directory so recorded paths agree.
  const fs::path current = work / "current", first = work / "run1", second = work / "run2";
  try {
    fs::remove_all(first);
    fs::remove_all(second);
    const ChainRun r1 = run_chain(current, config);
    fs::rename(current, first);
    report(7, "training smoke (luminance)", loss_decrease(first / "lumen" / kLossLogName, r1.lumen_seconds));
    report(7, "training smoke (hue)", loss_decrease(first / "hue" / kLossLogName, r1.hue_seconds));
    report(8, "end-to-end improvement", improvement(first / "eval", r1.eval_pairs));
    report(9, "FID ordering", fid_ordering(first / "eval"));
    run_chain(current, config);
    fs::rename(current, second);
    report(10, "determinism", determinism(first, second));
  } catch (const std::exception& e) {
    std::printf("pipeline error: %s\n", e.what());
    report(7, "training smoke", {false, "pipeline did not complete"});
    report(8, "end-to-end improvement", {false, "pipeline did not complete"});
    report(9, "FID ordering", {false, "pipeline did not complete"});
    report(10, "determinism", {false, "pipeline did not complete"});
  }
  report(11, "hyperparameter defaults", hyperparameters());

  std::printf("%s: %d failing criteria\n", g_failures == 0 ? "ACCEPTED" : "REJECTED", g_failures);
  return g_failures == 0 ? 0 : 1;
}
