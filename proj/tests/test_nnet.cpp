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

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "previvor/errors.hpp"
#include "previvor/nn/checkpoint.hpp"
#include "previvor/nn/layers.hpp"
#include "previvor/nn/losses.hpp"
#include "previvor/nn/ops.hpp"
#include "previvor/nn/optim.hpp"

using namespace previvor;
using namespace previvor::nn;
using previvor::testing::gradcheck;
using previvor::testing::project;
using previvor::testing::random_tensor;

namespace {

constexpr double kTol = 1e-4;
constexpr std::uint64_t kSeeds[] = {11, 23, 47};

void check_unary(const char* name, Tensor (*op)(const Tensor&), double lo = -2.0, double hi = 2.0) {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    auto x = random_tensor({2, 3, 4}, rng, lo, hi);
    auto r = gradcheck([&](const std::vector<Tensor>& in) { return project(op(in[0]), seed); }, {x});
    INFO(name << " seed " << seed);
    CHECK(r.worst_relative < kTol);
  }
}

}  // namespace

TEST_CASE("backward of a quadratic gives twice the weights") {
  auto w = Tensor::from({3}, {1, 2, 3}, true);
  sum(mul(w, w)).backward();
  CHECK(w.grad()[0] == 2.0);
  CHECK(w.grad()[1] == 4.0);
  CHECK(w.grad()[2] == 6.0);
}

TEST_CASE("repeated backward accumulates into leaves") {
  auto w = Tensor::from({2}, {1, -1}, true);
  auto loss = sum(scale(w, 3.0));
  loss.backward();
  loss.backward();
  CHECK(w.grad()[0] == 6.0);
  CHECK(w.grad()[1] == 6.0);
}

TEST_CASE("parameter not used by the loss gets zero gradient") {
  auto w = Tensor::from({2}, {1, 2}, true);
  auto p = Tensor::from({2}, {5, 6}, true);
  p.zero_grad();
  sum(square(w)).backward();
  CHECK(p.grad()[0] == 0.0);
  CHECK(p.grad()[1] == 0.0);
}

TEST_CASE("backward requires a scalar") {
  auto w = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(scale(w, 2.0).backward(), ShapeError);
}

TEST_CASE("no-grad guard records nothing") {
  auto w = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard ng;
    y = sum(square(w));
  }
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("elementwise gradients match finite differences") {
  check_unary("relu", [](const Tensor& x) { return relu(x); });
  check_unary("leaky_relu", [](const Tensor& x) { return leaky_relu(x, 0.2); });
  check_unary("tanh", [](const Tensor& x) { return nn::tanh(x); });
  check_unary("sigmoid", [](const Tensor& x) { return sigmoid(x); });
  check_unary("exp", [](const Tensor& x) { return nn::exp(x); });
  check_unary("abs", [](const Tensor& x) { return nn::abs(x); });
  check_unary("square", [](const Tensor& x) { return square(x); });
  check_unary("sqrt", [](const Tensor& x) { return nn::sqrt(x); }, 0.1, 3.0);
  check_unary("clamp", [](const Tensor& x) { return clamp(x, -1.0, 1.0); });
  check_unary("mean", [](const Tensor& x) { return mean(x); });
  check_unary("softmax", [](const Tensor& x) { return softmax_last(x); });
  check_unary("transpose", [](const Tensor& x) { return transpose_last2(x); });
  check_unary("scale+shift", [](const Tensor& x) { return add_scalar(scale(x, -1.5), 0.25); });
}

TEST_CASE("binary and structural ops match finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
    auto s = random_tensor({1}, rng);
    CHECK(gradcheck([&](auto& in) { return project(add(in[0], in[1]), seed); }, {a, b}).worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return project(sub(in[0], in[1]), seed); }, {a, b}).worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return project(mul(in[0], in[1]), seed); }, {a, b}).worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return project(add_broadcast(in[0], in[1]), seed); }, {a, s}).worst_relative <
          kTol);
    CHECK(gradcheck([&](auto& in) { return project(reshape(in[0], {4, 6}), seed); }, {a}).worst_relative < kTol);

    auto m1 = random_tensor({3, 4}, rng), m2 = random_tensor({4, 5}, rng);
    CHECK(gradcheck([&](auto& in) { return project(matmul(in[0], in[1]), seed); }, {m1, m2}).worst_relative < kTol);
    auto b1 = random_tensor({2, 3, 4}, rng), b2 = random_tensor({2, 4, 2}, rng);
    CHECK(gradcheck([&](auto& in) { return project(bmm(in[0], in[1]), seed); }, {b1, b2}).worst_relative < kTol);

    auto x = random_tensor({2, 3, 5}, rng), w = random_tensor({5, 4}, rng), bias = random_tensor({4}, rng);
    CHECK(gradcheck([&](auto& in) { return project(linear(in[0], in[1], in[2]), seed); }, {x, w, bias})
              .worst_relative < kTol);

    auto g = random_tensor({5}, rng, 0.5, 1.5), be = random_tensor({5}, rng);
    CHECK(gradcheck([&](auto& in) { return project(layer_norm_last(in[0], in[1], in[2]), seed); }, {x, g, be})
              .worst_relative < kTol);
  }
}

TEST_CASE("image ops match finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    auto x = random_tensor({2, 3, 8, 8}, rng);
    auto y = random_tensor({2, 2, 8, 8}, rng);
    for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, std::tuple{2, 1, 3}, std::tuple{1, 0, 1}, std::tuple{2, 0, 2}}) {
      auto w = random_tensor({4, 3, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, rng);
      auto b = random_tensor({4}, rng);
      auto r = gradcheck([&](auto& in) { return project(conv2d(in[0], in[1], in[2], stride, pad), seed); },
                         {x, w, b});
      INFO("conv stride " << stride << " pad " << pad << " k " << k);
      CHECK(r.worst_relative < kTol);
    }
    auto small = random_tensor({2, 3, 4, 4}, rng);
    CHECK(gradcheck([&](auto& in) { return project(upsample2x(in[0]), seed); }, {small}).worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return project(concat_channels({in[0], in[1]}), seed); }, {x, y})
              .worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return project(select_channels(in[0], 1, 2), seed); }, {x}).worst_relative <
          kTol);
    CHECK(gradcheck([&](auto& in) { return project(concat_batch({in[0], in[1]}), seed); }, {y, random_tensor({1, 2, 8, 8}, rng)})
              .worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return project(slice_batch(in[0], 1), seed); }, {x}).worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return project(nchw_to_tokens(in[0]), seed); }, {x}).worst_relative < kTol);
    auto tok = random_tensor({2, 16, 3}, rng);
    CHECK(gradcheck([&](auto& in) { return project(tokens_to_nchw(in[0], 4, 4), seed); }, {tok}).worst_relative <
          kTol);
    auto q = random_tensor({5, 3}, rng);
    CHECK(gradcheck([&](auto& in) { return project(repeat_batch(in[0], 3), seed); }, {q}).worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return project(global_avg_pool(in[0]), seed); }, {x}).worst_relative < kTol);
  }
}

TEST_CASE("layers match finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    Conv2d conv(2, 3, 3, 2, 1, rng);
    auto x = random_tensor({2, 2, 8, 8}, rng);
    CHECK(gradcheck([&](auto& in) { return project(conv(in[0]), seed); }, {x, conv.weight, conv.bias})
              .worst_relative < kTol);

    Linear lin(4, 6, rng);
    auto t = random_tensor({2, 5, 4}, rng);
    CHECK(gradcheck([&](auto& in) { return project(lin(in[0]), seed); }, {t, lin.weight, lin.bias})
              .worst_relative < kTol);

    LayerNorm ln(4);
    CHECK(gradcheck([&](auto& in) { return project(ln(in[0]), seed); }, {t, ln.gamma, ln.beta}).worst_relative <
          kTol);

    Mlp mlp(4, 8, rng);
    ParamList mp;
    mlp.collect(mp, "mlp");
    std::vector<Tensor> mlp_in{t};
    for (auto& p : mp) mlp_in.push_back(p.tensor);
    CHECK(gradcheck([&](auto& in) { return project(mlp(in[0]), seed); }, mlp_in).worst_relative < kTol);

    for (std::size_t heads : {1, 2}) {
      MultiHeadAttention mha(4, heads, rng);
      ParamList ap;
      mha.collect(ap, "mha");
      auto query = random_tensor({2, 3, 4}, rng), memory = random_tensor({2, 6, 4}, rng);
      std::vector<Tensor> in0{query, memory};
      for (auto& p : ap) in0.push_back(p.tensor);
      auto r = gradcheck([&](auto& in) { return project(mha(in[0], in[1]), seed); }, in0);
      INFO("heads " << heads);
      CHECK(r.worst_relative < kTol);
    }

    PatchDiscriminator pd(1, 4, 3, rng);
    auto img = random_tensor({2, 1, 8, 8}, rng);
    std::vector<Tensor> pin{img};
    for (auto& p : pd.parameters()) pin.push_back(p.tensor);
    CHECK(gradcheck(
              [&](auto& in) {
                auto o = pd.forward(in[0]);
                return add(project(o.logits, seed), project(o.features.back(), seed + 1));
              },
              pin)
              .worst_relative < kTol);

    LatentDiscriminator ld(3, 5, rng);
    auto z = random_tensor({2, 3, 2, 2}, rng);
    std::vector<Tensor> lin_in{z};
    for (auto& p : ld.parameters()) lin_in.push_back(p.tensor);
    CHECK(gradcheck([&](auto& in) { return project(ld.forward(in[0]).logits, seed); }, lin_in).worst_relative <
          kTol);

    RandomConvPyramid pyr(2, seed);
    auto pimg = random_tensor({1, 2, 8, 8}, rng);
    CHECK(gradcheck(
              [&](auto& in) {
                auto f = pyr.features(in[0]);
                Tensor s = project(f[0], seed);
                for (std::size_t i = 1; i < f.size(); ++i) s = add(s, project(f[i], seed + i));
                return s;
              },
              {pimg})
              .worst_relative < kTol);
  }
}

TEST_CASE("loss terms match finite differences") {
  for (auto seed : kSeeds) {
    Rng rng(seed);
    auto p = random_tensor({2, 2, 8, 8}, rng, -3, 3), t = random_tensor({2, 2, 8, 8}, rng, -3, 3);
    CHECK(gradcheck([&](auto& in) { return pixel_loss(in[0], in[1], true); }, {p, t}).worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return pixel_loss(in[0], in[1], false); }, {p, t}).worst_relative < kTol);

    std::vector<double> mv(2 * 8 * 8);
    for (auto& m : mv) m = rng.bernoulli(0.5) ? 1.0 : 0.0;
    auto mask = Tensor::from({2, 1, 8, 8}, mv);
    CHECK(gradcheck([&](auto& in) { return masked_pixel_loss(in[0], in[1], mask); }, {p, t}).worst_relative < kTol);

    auto mu = random_tensor({2, 3, 2, 2}, rng), lv = random_tensor({2, 3, 2, 2}, rng);
    CHECK(gradcheck([&](auto& in) { return kl_loss(in[0], in[1]); }, {mu, lv}).worst_relative < kTol);

    auto real = random_tensor({2, 1, 3, 3}, rng, -2, 2), fake = random_tensor({2, 1, 3, 3}, rng, -2, 2);
    CHECK(gradcheck([&](auto& in) { return hinge_generator_loss(in[0]); }, {fake}).worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return hinge_discriminator_loss(in[0], in[1]); }, {real, fake})
              .worst_relative < kTol);

    PatchDiscriminator disc(2, 4, 3, rng);
    auto real_img = random_tensor({2, 2, 8, 8}, rng);
    CHECK(gradcheck([&](auto& in) { return adversarial_losses(disc, real_img, in[0]).generator; }, {p})
              .worst_relative < kTol);
    CHECK(gradcheck([&](auto& in) { return adversarial_losses(disc, real_img, in[0]).feature_match; }, {p})
              .worst_relative < kTol);
    std::vector<Tensor> din;
    for (auto& q : disc.parameters()) din.push_back(q.tensor);
    CHECK(gradcheck([&](auto&) { return adversarial_losses(disc, real_img, p).discriminator; }, din)
              .worst_relative < kTol);

    RandomConvPyramid pyr(2, seed);
    CHECK(gradcheck([&](auto& in) { return perceptual_loss(in[0], t, pyr); }, {p}).worst_relative < kTol);

    auto ab = random_tensor({2, 2, 8, 8}, rng, -20, 20);
    CHECK(gradcheck([&](auto& in) { return colorful_loss(in[0]); }, {ab}).worst_relative < kTol);
  }
}

TEST_CASE("pixel loss values") {
  auto z = Tensor::zeros({4});
  CHECK(pixel_loss(z, z, true).item() == 0.0);
  CHECK(pixel_loss(Tensor::full({4}, 0.5), z, true).item() == doctest::Approx(0.125));
  CHECK(pixel_loss(Tensor::full({4}, 2.0), z, true).item() == doctest::Approx(1.5));
  CHECK(pixel_loss(Tensor::full({4}, 2.0), z, false).item() == doctest::Approx(2.0));
  CHECK_THROWS_AS(pixel_loss(Tensor::zeros({4}), Tensor::zeros({5}), false), ShapeError);
}

TEST_CASE("masked pixel loss values") {
  auto pred = Tensor::zeros({1, 1, 2, 2});
  auto target = Tensor::from({1, 1, 2, 2}, {2, 2, 100, 100});
  CHECK(masked_pixel_loss(pred, target, Tensor::zeros({1, 1, 2, 2})).item() == 0.0);
  CHECK(masked_pixel_loss(pred, target, Tensor::from({1, 1, 2, 2}, {1, 1, 0, 0})).item() == doctest::Approx(2.0));
  CHECK(masked_pixel_loss(pred, target, Tensor::full({1, 1, 2, 2}, 1.0)).item() ==
        doctest::Approx(pixel_loss(pred, target, false).item()));
}

TEST_CASE("kl loss values") {
  CHECK(kl_loss(Tensor::zeros({3}), Tensor::zeros({3})).item() == 0.0);
  CHECK(kl_loss(Tensor::full({3}, 1.0), Tensor::zeros({3})).item() == doctest::Approx(0.5));
  CHECK(kl_loss(Tensor::zeros({3}), Tensor::full({3}, std::log(4.0))).item() ==
        doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))));
}

namespace {

class ConstantDiscriminator final : public Discriminator {
 public:
  DiscriminatorOutput forward(const Tensor& x) const override {
    return {scale(select_channels(x, 0, 1), 0.0), {x}};
  }
  ParamList parameters() const override { return {}; }
};

}  // namespace

TEST_CASE("adversarial losses under a constant discriminator") {
  Rng rng(5);
  auto real = random_tensor({2, 1, 4, 4}, rng);
  ConstantDiscriminator d;
  auto same = adversarial_losses(d, real, real);
  CHECK(same.feature_match.item() == 0.0);
  CHECK(same.generator.item() == 0.0);
  CHECK(same.discriminator.item() == doctest::Approx(2.0));
}

TEST_CASE("perceptual loss properties") {
  Rng rng(9);
  IdentityExtractor id;
  auto a = random_tensor({1, 2, 4, 4}, rng), b = random_tensor({1, 2, 4, 4}, rng);
  CHECK(perceptual_loss(a, a, id).item() == 0.0);
  CHECK(perceptual_loss(a, b, id).item() == doctest::Approx(pixel_loss(a, b, false).item()).epsilon(1e-12));
  RandomConvPyramid pyr(2, 3);
  for (int i = 0; i < 100; ++i) {
    auto x = random_tensor({1, 2, 8, 8}, rng), y = random_tensor({1, 2, 8, 8}, rng);
    REQUIRE(perceptual_loss(x, y, pyr).item() >= 0.0);
  }
}

TEST_CASE("colorful loss bounds") {
  CHECK(colorful_loss(Tensor::zeros({2, 2, 4, 4})).item() == 1.0);
  CHECK(colorful_loss(Tensor::full({1, 2, 4, 4}, 100.0)).item() == 0.0);
}

TEST_CASE("learning-rate schedule halves at each milestone") {
  LrSchedule s;
  CHECK(s.lr_at(0) == 1e-4);
  CHECK(s.lr_at(3999) == 1e-4);
  CHECK(s.lr_at(4000) == doctest::Approx(5e-5));
  CHECK(s.lr_at(8000) == doctest::Approx(2.5e-5));
  CHECK(s.lr_at(20000) == doctest::Approx(1e-4 / 32));
  LrSchedule bad;
  bad.milestones = {10, 5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LrSchedule{};
  bad.decay_factor = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("AdamW update rule") {
  SUBCASE("zero gradient and zero decay is a fixed point") {
    auto w = Tensor::from({3}, {1, -2, 3}, true);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({{"w", w}}, cfg);
    w.zero_grad();
    opt.step(LrSchedule{});
    CHECK(w.data()[0] == 1.0);
    CHECK(w.data()[1] == -2.0);
    CHECK(w.data()[2] == 3.0);
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("two steps with constant unit gradient follow the recursion") {
    auto w = Tensor::from({1}, {0.5}, true);
    AdamW opt({{"w", w}});
    LrSchedule sched;
    double x = 0.5, m = 0, v = 0;
    const double lr = 1e-4, b1 = 0.9, b2 = 0.99, wd = 0.01, eps = 1e-8;
    for (int t = 1; t <= 2; ++t) {
      w.grad()[0] = 1.0;
      opt.step(sched);
      x -= lr * wd * x;
      m = b1 * m + (1 - b1);
      v = b2 * v + (1 - b2);
      x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
      CHECK(w.data()[0] == doctest::Approx(x).epsilon(1e-14));
    }
  }
  SUBCASE("missing gradient is a state error") {
    auto w = Tensor::from({2}, {1, 2}, true);
    AdamW opt({{"w", w}});
    CHECK_THROWS_AS(opt.step(LrSchedule{}), StateError);
  }
  SUBCASE("deterministic given identical inputs") {
    auto run = [] {
      auto w = Tensor::from({2}, {1, 2}, true);
      AdamW opt({{"w", w}});
      for (int i = 0; i < 5; ++i) {
        w.grad()[0] = 0.3 * i;
        w.grad()[1] = -0.1;
        opt.step(LrSchedule{});
      }
      return std::vector<double>(w.data().begin(), w.data().end());
    };
    CHECK(run() == run());
  }
}

TEST_CASE("checkpoint archive round-trip") {
  Rng rng(3);
  auto a = random_tensor({2, 3}, rng), b = random_tensor({4}, rng);
  Archive ar;
  ar.meta["step_count"] = 17;
  ar.put_all({{"a", a}, {"b", b}}, "net.");
  const auto path = std::filesystem::temp_directory_path() / "previvor_ckpt_test.bin";
  ar.save(path);
  auto back = Archive::load(path);
  CHECK(back.meta["step_count"] == 17);
  auto a2 = Tensor::zeros({2, 3}), b2 = Tensor::zeros({4});
  back.load_into({{"a", a2}, {"b", b2}}, "net.");
  CHECK(std::vector<double>(a2.data().begin(), a2.data().end()) ==
        std::vector<double>(a.data().begin(), a.data().end()));
  CHECK(back.serialize() == ar.serialize());
  auto wrong = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(back.load_into({{"a", wrong}}, "net."), StateError);
  CHECK_THROWS_AS(Archive::deserialize({1, 2, 3}), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("attention rows are distributions") {
  Rng rng(4);
  MultiHeadAttention mha(8, 4, rng);
  auto q = random_tensor({2, 5, 8}, rng), m = random_tensor({2, 7, 8}, rng);
  std::vector<Tensor> weights;
  mha(q, m, &weights);
  REQUIRE(weights.size() == 4);
  for (const auto& w : weights) {
    auto d = w.data();
    for (std::size_t r = 0; r < d.size() / 7; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(d[r * 7 + c] >= 0.0);
        s += d[r * 7 + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
  CHECK_THROWS_AS(MultiHeadAttention(6, 4, rng), ConfigError);
}
