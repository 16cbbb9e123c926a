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

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "previvor/errors.hpp"
#include "previvor/huecorr.hpp"
#include "previvor/nn/losses.hpp"
#include "previvor/nn/ops.hpp"

using namespace previvor;
using namespace previvor::hue;
using previvor::testing::make_memory_corpus;

namespace {

HueConfig tiny_net() {
  HueConfig c;
  c.queries = 4;
  c.dim = 16;
  c.heads = 2;
  c.mlp_hidden = 32;
  c.encoder_channels = {8, 8, 16, 16};
  return c;
}

HueTrainConfig tiny_training() {
  HueTrainConfig c;
  c.resolution = 32;
  c.batch_size = 2;
  c.iterations = 4;
  c.net = tiny_net();
  c.disc_base = 4;
  c.disc_layers = 3;
  c.checkpoint_every = 2;
  c.seed = 11;
  return c;
}

nn::Tensor random_input(std::size_t n, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * 3 * size * size);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return nn::Tensor::from({n, 3, size, size}, std::move(v));
}

std::vector<double> values(const nn::Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Values of item `i` from a batch-major tensor.
std::vector<double> item(const nn::Tensor& t, std::size_t i) {
  const std::size_t per = t.numel() / t.dim(0);
  return {t.data().begin() + static_cast<long>(i * per), t.data().begin() + static_cast<long>((i + 1) * per)};
}

bool close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("configuration invariants") {
  auto c = tiny_net();
  CHECK_NOTHROW(c.validate());
  c.queries = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_net();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const HueConfig big = HueConfig::large();
  CHECK(big.queries == 100);
  CHECK(big.dim == 256);
  CHECK(big.blocks == 9);
  CHECK(HueConfig::from_json(tiny_net().to_json()).to_json() == tiny_net().to_json());
  const HueTrainConfig t;
  CHECK(t.weights.pix == 0.1);
  CHECK(t.weights.mask == 1.0);
  CHECK(t.weights.per == 5.0);
  CHECK(t.weights.adv == 1.0);
  CHECK(t.weights.col == 0.5);
  CHECK(t.batch_size == 4);
  CHECK(t.resolution == 64);
  CHECK(t.iterations == 200);
}

TEST_CASE("encoder feature shapes") {
  const HueNet net(tiny_net(), 1);
  const auto f = net.encode_features(random_input(2, 64, 3));
  REQUIRE(f.scales.size() == 3);
  CHECK(f.scales[0].shape() == nn::Shape{2, 16, 4, 4});
  CHECK(f.scales[1].shape() == nn::Shape{2, 16, 8, 8});
  CHECK(f.scales[2].shape() == nn::Shape{2, 16, 16, 16});
  CHECK(f.pixel_embedding.shape() == nn::Shape{2, 16, 64, 64});
  CHECK(net.decode_colors(f).shape() == nn::Shape{2, 4, 16});
  CHECK(net.forward(random_input(2, 64, 3)).shape() == nn::Shape{2, 2, 64, 64});
  CHECK_THROWS_AS(net.encode_features(nn::Tensor::zeros({1, 2, 64, 64})), ShapeError);
  CHECK_THROWS(net.encode_features(nn::Tensor::zeros({1, 3, 40, 40})));
}

TEST_CASE("all-zero input yields finite features") {
  const HueNet net(tiny_net(), 2);
  const auto f = net.encode_features(nn::Tensor::zeros({1, 3, 32, 32}));
  for (const auto& s : f.scales) {
    for (double v : s.data()) REQUIRE(std::isfinite(v));
  }
  for (double v : net.forward(nn::Tensor::zeros({1, 3, 32, 32})).data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("batch permutation permutes outputs") {
  const HueNet net(tiny_net(), 3);
  const auto x = random_input(3, 32, 4);
  const auto y = net.forward(x);
  const std::vector<std::size_t> perm{2, 0, 1};
  std::vector<nn::Tensor> parts;
  for (auto p : perm) parts.push_back(nn::slice_batch(x, p));
  const auto yp = net.forward(nn::concat_batch(parts));
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(close(item(yp, i), item(y, perm[i]), 1e-9));
}

TEST_CASE("attention with identical keys ignores the query") {
  Rng rng(5);
  const nn::MultiHeadAttention attn(8, 2, rng);
  std::vector<double> mem(5 * 8);
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t j = 0; j < 8; ++j) mem[t * 8 + j] = 0.1 * static_cast<double>(j) - 0.3;
  }
  const auto memory = nn::Tensor::from({1, 5, 8}, mem);
  const auto single = nn::Tensor::from({1, 1, 8}, std::vector<double>(mem.begin(), mem.begin() + 8));
  Rng qr(6);
  std::vector<double> q1(3 * 8), q2(3 * 8);
  for (auto& v : q1) v = qr.uniform(-2, 2);
  for (auto& v : q2) v = qr.uniform(-2, 2);
  const auto a = attn(nn::Tensor::from({1, 3, 8}, q1), memory);
  const auto b = attn(nn::Tensor::from({1, 3, 8}, q2), memory);
  CHECK(close(values(a), values(b), 1e-12));
  // Every query receives the same vector: attending over one copy of the key.
  const auto c = attn(nn::Tensor::from({1, 1, 8}, std::vector<double>(q1.begin(), q1.begin() + 8)), single);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(close(std::vector<double>(a.data().begin() + static_cast<long>(r * 8),
                                    a.data().begin() + static_cast<long>(r * 8 + 8)),
                values(c), 1e-12));
  }
}

TEST_CASE("self-attention over one query reduces to its value path") {
  Rng rng(7);
  const nn::MultiHeadAttention attn(8, 4, rng);
  Rng qr(8);
  std::vector<double> q(8), other(8);
  for (auto& v : q) v = qr.uniform(-1, 1);
  for (auto& v : other) v = qr.uniform(-1, 1);
  std::vector<nn::Tensor> w;
  const auto self = attn(nn::Tensor::from({1, 1, 8}, q), nn::Tensor::from({1, 1, 8}, q), &w);
  REQUIRE(w.size() == 4);
  for (const auto& h : w) CHECK(h.item() == doctest::Approx(1.0).epsilon(1e-15));
  // The query projection plays no role, so any other query gives the same result.
  const auto cross = attn(nn::Tensor::from({1, 1, 8}, other), nn::Tensor::from({1, 1, 8}, q));
  CHECK(close(values(self), values(cross), 1e-12));
}

TEST_CASE("attention rows are distributions at every block and head") {
  const HueNet net(tiny_net(), 9);
  DecodeTrace trace;
  net.forward(random_input(2, 32, 10), &trace);
  const auto cfg = tiny_net();
  CHECK(trace.cross_weights.size() == static_cast<std::size_t>(cfg.blocks) * cfg.heads);
  CHECK(trace.self_weights.size() == static_cast<std::size_t>(cfg.blocks) * cfg.heads);
  // Cross-attention cycles over the 1/16, 1/8 and 1/4 scales: 2x2, 4x4, 8x8 tokens at 32x32.
  CHECK(trace.cross_weights[0].dim(2) == 4);
  CHECK(trace.cross_weights[cfg.heads].dim(2) == 16);
  CHECK(trace.cross_weights[2 * cfg.heads].dim(2) == 64);
  auto rows_ok = [](const nn::Tensor& w) {
    const std::size_t cols = w.dim(2);
    for (std::size_t r = 0; r < w.numel() / cols; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = w.data()[r * cols + c];
        if (v < 0.0) return false;
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) return false;
    }
    return true;
  };
  for (const auto& w : trace.cross_weights) CHECK(rows_ok(w));
  for (const auto& w : trace.self_weights) {
    CHECK(w.dim(1) == cfg.queries);
    CHECK(rows_ok(w));
  }
}

TEST_CASE("colour queries receive gradient") {
  const HueNet net(tiny_net(), 12);
  const auto x = random_input(1, 32, 13);
  const auto pred = net.forward(x);
  nn::Tensor target = nn::Tensor::full(pred.shape(), 20.0);
  nn::zero_grads(net.parameters());
  nn::pixel_loss(pred, target, false).backward();
  double norm = 0.0;
  for (double g : net.color_queries().grad()) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("network input masks the prior") {
  Plane L(16, 16, 50.0);
  Plane a(16, 16, 40.0), b(16, 16, -30.0);
  const ChromaPlanes prior(a, b);
  PriorMask mask(16, 16);
  for (int c = 0; c < 16; ++c) mask(3, c) = 1;
  const auto t = hue_input({&L}, {&prior}, {&mask});
  CHECK(t.shape() == nn::Shape{1, 3, 16, 16});
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      const std::size_t i = static_cast<std::size_t>(r * 16 + c);
      CHECK(t.data()[i] == 0.5);
      CHECK(t.data()[256 + i] == (r == 3 ? 40.0 / 128.0 : 0.0));
      CHECK(t.data()[512 + i] == (r == 3 ? -30.0 / 128.0 : 0.0));
    }
  }
  const PriorMask empty(16, 16);
  const auto z = hue_input({&L}, {&prior}, {&empty});
  for (std::size_t i = 256; i < 768; ++i) REQUIRE(z.data()[i] == 0.0);
  const PriorMask wrong(8, 16);
  CHECK_THROWS_AS(hue_input({&L}, {&prior}, {&wrong}), DimensionError);
}

TEST_CASE("chroma correction contracts") {
  const HueNet net(tiny_net(), 14);
  Rng rng(15);
  Plane p(32, 32), a(32, 32), b(32, 32);
  for (auto& v : p.values()) v = rng.uniform(0, 255);
  for (auto& v : a.values()) v = rng.uniform(-128, 127);
  for (auto& v : b.values()) v = rng.uniform(-128, 127);
  PriorMask m(32, 32);
  for (int r = 0; r < 32; r += 2) m(r, r) = 1;
  const LuminancePlane L(p, LumDomain::restored);
  const ChromaPlanes prior(a, b);
  const auto out = correct_hue(L, prior, m, net);
  const auto again = correct_hue(L, prior, m, net);
  CHECK(out.rows() == 32);
  CHECK(out.cols() == 32);
  CHECK(std::ranges::equal(out.a().values(), again.a().values()));
  CHECK(std::ranges::equal(out.b().values(), again.b().values()));
  for (const Plane* q : {&out.a(), &out.b()}) {
    for (double v : q->values()) {
      REQUIRE(v >= -128.0);
      REQUIRE(v <= 127.0);
    }
  }
  CHECK_THROWS_AS(correct_hue(L, prior, PriorMask(16, 32), net), DimensionError);
}

TEST_CASE("training pairs") {
  const auto mc = make_memory_corpus(12, 48, 21);
  const PriorConfig pc;
  Rng atten(3);
  int built = 0;
  for (const auto& img : mc.clean) {
    HueSample plain, faded;
    try {
      plain = make_hue_training_pair(img, pc, AttenuationParams::identity());
      faded = make_hue_training_pair(img, pc, atten);
    } catch (const NoSilkFoundError&) {
      continue;
    }
    ++built;
    CHECK(std::ranges::equal(plain.target.a().values(), img.a().values()));
    CHECK(plain.mask == faded.mask);
    for (int r = 0; r < img.rows(); ++r) {
      for (int c = 0; c < img.cols(); ++c) {
        if (plain.mask(r, c)) {
          REQUIRE(plain.input.a()(r, c) == img.a()(r, c));
          REQUIRE(plain.input.b()(r, c) == img.b()(r, c));
          REQUIRE(std::abs(faded.input.a()(r, c)) <= std::abs(img.a()(r, c)));
          REQUIRE(std::abs(faded.input.b()(r, c)) <= std::abs(img.b()(r, c)));
        } else {
          REQUIRE(faded.input.a()(r, c) == 0.0);
          REQUIRE(faded.input.b()(r, c) == 0.0);
        }
      }
    }
  }
  CHECK(built > 0);
  // A chroma checkerboard has no flat region to estimate the silk from.
  Plane ca(32, 32), cb(32, 32);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) ca(r, c) = cb(r, c) = ((r + c) % 2) ? 60.0 : -60.0;
  }
  const LabImage busy(Plane(32, 32, 60.0), ca, cb);
  CHECK_THROWS_AS(make_hue_training_pair(busy, pc, AttenuationParams::identity()), NoSilkFoundError);
}

TEST_CASE("masked pixel term ignores unmasked targets") {
  Rng rng(16);
  std::vector<double> p(2 * 16), t(2 * 16), m(16, 0.0);
  for (auto& v : p) v = rng.uniform(-50, 50);
  for (auto& v : t) v = rng.uniform(-50, 50);
  for (std::size_t i = 0; i < 16; i += 3) m[i] = 1.0;
  const auto pred = nn::Tensor::from({1, 2, 4, 4}, p);
  const auto mask = nn::Tensor::from({1, 1, 4, 4}, m);
  const double base = nn::masked_pixel_loss(pred, nn::Tensor::from({1, 2, 4, 4}, t), mask).item();
  auto t2 = t;
  t2[1] += 100.0;
  t2[16 + 4] -= 70.0;
  CHECK(nn::masked_pixel_loss(pred, nn::Tensor::from({1, 2, 4, 4}, t2), mask).item() == base);
  t2[3] += 1.0;
  CHECK(nn::masked_pixel_loss(pred, nn::Tensor::from({1, 2, 4, 4}, t2), mask).item() != base);
}

TEST_CASE("training logs the generator terms and resumes exactly") {
  const auto mc = make_memory_corpus(6, 32, 22);
  CHECK_THROWS_AS(HueTrainer(tiny_training(), {}), ConfigError);
  auto restored = tiny_training();
  restored.luminance_source = LuminanceSource::restored;
  CHECK_THROWS_AS(HueTrainer(restored, mc.clean), ConfigError);

  HueTrainer tr(tiny_training(), mc.clean);
  const auto q0 = std::vector<double>(tr.net().color_queries().data().begin(), tr.net().color_queries().data().end());
  std::vector<std::vector<std::uint8_t>> snapshots;
  tr.train({}, [&](const HueTrainer& t) { snapshots.push_back(t.to_archive().serialize()); });
  REQUIRE(tr.history().size() == 4);
  for (const auto& h : tr.history()) {
    CHECK(h.terms.size() == 5);
    for (const char* k : {"pixel", "mask", "per", "adv", "col"}) CHECK(h.terms.count(k) == 1);
    CHECK(std::isfinite(h.total));
  }
  CHECK_FALSE(close(q0, values(tr.net().color_queries()), 0.0));
  REQUIRE(snapshots.size() == 2);

  HueTrainer again(tiny_training(), mc.clean);
  again.train();
  const auto full = again.to_archive().serialize();
  CHECK(full == tr.to_archive().serialize());

  HueTrainer resumed(tiny_training(), mc.clean);
  resumed.resume_from(nn::Archive::deserialize(snapshots[0]));
  CHECK(resumed.step() == 2);
  resumed.train();
  CHECK(resumed.to_archive().serialize() == full);

  auto other = tiny_training();
  other.weights.col = 0.25;
  HueTrainer mismatched(other, mc.clean);
  CHECK_THROWS_AS(mismatched.resume_from(nn::Archive::deserialize(snapshots[0])), ConfigError);

  const auto model = HueModel::from_archive(nn::Archive::deserialize(full));
  CHECK(model.resolution == 32);
  const auto x = random_input(1, 32, 1);
  CHECK(close(values(model.net.forward(x)), values(tr.net().forward(x)), 0.0));
}

TEST_CASE("end-to-end restoration") {
  const auto mc = make_memory_corpus(2, 32, 23);
  const lumen::LumenModel lm(32, lumen::VaeConfig{8, 4, 3}, lumen::MappingConfig{2, 8}, 1);
  const HueNet net(tiny_net(), 2);
  const auto a = restore_painting(mc.degraded[0], lm, net, PriorConfig{});
  const auto b = restore_painting(mc.degraded[0], lm, net, PriorConfig{});
  CHECK(a.rgb.height() == 32);
  CHECK(a.rgb.width() == 32);
  CHECK(a.rgb == b.rgb);
  CHECK(a.side_info().contains("silk"));
  CHECK(a.side_info().contains("mask"));
  const LabImage wrong(Plane(48, 48, 50.0), Plane(48, 48, 5.0), Plane(48, 48, 5.0));
  try {
    restore_painting(wrong, lm, net, PriorConfig{});
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(std::string(e.stage()) == "luminance");
  }
}
