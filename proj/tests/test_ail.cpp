#include <doctest.h>

#include <cmath>

#include "mccl/ail.hpp"
#include "mccl/ops.hpp"
#include "mccl/rng.hpp"

using namespace mccl;

namespace {

template <typename S>
Tensor<S> rand_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  auto t = Tensor<S>::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <typename S>
ParamStore<S> fresh_disc(std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<S> ps;
  build_discriminator_params(ps, rng);
  return ps;
}

}  // namespace

TEST_CASE("mask_images closed forms and linearity in the map") {
  Rng rng(61);
  auto src = rand_tensor<float>({2, 3, 4, 4}, rng);

  auto ones = Tensor32::full({2, 1, 4, 4}, 1.0f);
  auto kept = mask_images(src, ones);
  for (std::int64_t i = 0; i < src.numel(); ++i) CHECK(kept[i] == src[i]);

  auto black = mask_images(src, Tensor32::zeros({2, 1, 4, 4}));
  for (std::int64_t i = 0; i < black.numel(); ++i) CHECK(black[i] == 0.0f);

  // binary half mask: left half preserved, right half zeroed
  auto half = Tensor32::zeros({2, 1, 4, 4});
  for (int b = 0; b < 2; ++b)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 2; ++x) half.at(b, 0, y, x) = 1.0f;
  auto masked = mask_images(src, half);
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y) {
        CHECK(masked.at(b, c, y, 0) == src.at(b, c, y, 0));
        CHECK(masked.at(b, c, y, 3) == 0.0f);
      }

  auto m = rand_tensor<float>({2, 1, 4, 4}, rng);
  auto scaled = mask_images(src, mul_scalar(m, 0.25));
  auto reference = mul_scalar(mask_images(src, m), 0.25);
  for (std::int64_t i = 0; i < scaled.numel(); ++i)
    CHECK(scaled[i] == doctest::Approx(reference[i]).epsilon(1e-6));

  CHECK_THROWS_AS(mask_images(src, Tensor32::zeros({2, 1, 2, 2})), ShapeError);
}

TEST_CASE("discriminator outputs per-image scores strictly inside (0,1)") {
  auto disc = fresh_disc<float>(62);
  Rng rng(63);
  auto x = rand_tensor<float>({3, 3, 32, 32}, rng);
  auto scores = discriminator_forward(x, disc, false);
  CHECK(scores.shape() == Shape{3});
  for (int i = 0; i < 3; ++i) {
    CHECK(scores[i] > 0.0f);
    CHECK(scores[i] < 1.0f);
    CHECK(scores[i] >= 1e-7f);
    CHECK(scores[i] <= 1.0f - 1e-7f);
  }
  CHECK_THROWS_AS(discriminator_forward(rand_tensor<float>({1, 3, 24, 24}, rng), disc, false),
                  ShapeError);
}

TEST_CASE("zero head weights give 0.5 scores") {
  auto disc = fresh_disc<float>(64);
  for (const char* name : {"disc/head.w", "disc/head.b"}) {
    auto& t = disc.p(name);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0f;
  }
  Rng rng(65);
  auto scores = discriminator_forward(rand_tensor<float>({2, 3, 16, 16}, rng), disc, false);
  CHECK(scores[0] == doctest::Approx(0.5f));
  CHECK(scores[1] == doctest::Approx(0.5f));
}

TEST_CASE("adversarial generator loss closed forms") {
  auto disc = fresh_disc<float>(66);
  for (const char* name : {"disc/head.w", "disc/head.b"}) {
    auto& t = disc.p(name);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0f;
  }
  Rng rng(67);
  auto src = rand_tensor<float>({2, 3, 16, 16}, rng);
  auto maps = rand_tensor<float>({2, 1, 16, 16}, rng);
  // zero head -> scores 0.5 -> loss ln 2
  CHECK(adv_generator_loss(maps, src, disc, false).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // saturated head -> scores ~1 -> loss ~0
  disc.p("disc/head.b")[0] = 1000.0f;
  CHECK(adv_generator_loss(maps, src, disc, false).item() ==
        doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("adversarial generator loss matches a scalar recomputation") {
  auto disc = fresh_disc<float>(68);
  Rng rng(69);
  auto src = rand_tensor<float>({3, 3, 16, 16}, rng);
  auto maps = rand_tensor<float>({3, 1, 16, 16}, rng);
  auto scores = discriminator_forward(mask_images(src, maps), disc, false);
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) expect -= std::log(static_cast<double>(scores[i]));
  expect /= 3.0;
  CHECK(adv_generator_loss(maps, src, disc, false).item() ==
        doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("discriminator loss closed form at 0.5 and scalar oracle") {
  auto disc = fresh_disc<float>(70);
  for (const char* name : {"disc/head.w", "disc/head.b"}) {
    auto& t = disc.p(name);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0f;
  }
  Rng rng(71);
  auto src = rand_tensor<float>({2, 3, 16, 16}, rng);
  auto pred = rand_tensor<float>({2, 1, 16, 16}, rng);
  auto gt = rand_tensor<float>({2, 1, 16, 16}, rng);
  CHECK(disc_loss(pred, gt, src, disc, 3.0, false).item() ==
        doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-6));

  auto disc2 = fresh_disc<float>(72);
  auto real_scores = discriminator_forward(mask_images(src, gt), disc2, false);
  auto fake_scores = discriminator_forward(mask_images(src, pred), disc2, false);
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    expect += -std::log(static_cast<double>(real_scores[i])) / 2.0;
    expect += -std::log(1.0 - static_cast<double>(fake_scores[i])) / 2.0;
  }
  expect *= 3.0 / 2.0;
  CHECK(disc_loss(pred, gt, src, disc2, 3.0, false).item() ==
        doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("generator adversarial gradients reach pred maps, never gt maps") {
  auto disc = fresh_disc<float>(73);
  disc.set_requires_grad(true);
  Rng rng(74);
  auto src = rand_tensor<float>({2, 3, 16, 16}, rng);
  auto pred = rand_tensor<float>({2, 1, 16, 16}, rng);
  auto gt = rand_tensor<float>({2, 1, 16, 16}, rng);
  pred.set_requires_grad(true);
  gt.set_requires_grad(true);

  Tape<float> tape;
  auto loss = adv_generator_loss(pred, src, disc, true);
  tape.backward(loss);

  double pred_norm = 0.0, gt_norm = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    pred_norm += std::abs(pred.grad()[i]);
    gt_norm += std::abs(gt.grad()[i]);
  }
  CHECK(pred_norm > 0.0);
  CHECK(gt_norm == 0.0);
}

TEST_CASE("discriminator loss gradients never reach the prediction graph") {
  auto disc = fresh_disc<float>(75);
  disc.set_requires_grad(true);
  Rng rng(76);
  auto src = rand_tensor<float>({2, 3, 16, 16}, rng);
  auto pred = rand_tensor<float>({2, 1, 16, 16}, rng);
  auto gt = rand_tensor<float>({2, 1, 16, 16}, rng);
  pred.set_requires_grad(true);

  Tape<float> tape;
  auto loss = disc_loss(pred, gt, src, disc, 3.0, true);
  tape.backward(loss);

  double pred_norm = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) pred_norm += std::abs(pred.grad()[i]);
  CHECK(pred_norm == 0.0);  // detached inside disc_loss

  double disc_norm = 0.0;
  for (float v : disc.p("disc/b1.w").grad_vec()) disc_norm += std::abs(v);
  CHECK(disc_norm > 0.0);
}

TEST_CASE("gradient of the scores reaches the maps through masking") {
  auto disc = fresh_disc<float>(77);
  Rng rng(78);
  auto src = rand_tensor<float>({2, 3, 16, 16}, rng);
  auto maps = rand_tensor<float>({2, 1, 16, 16}, rng);
  maps.set_requires_grad(true);

  Tape<float> tape;
  auto scores = discriminator_forward(mask_images(src, maps), disc, true);
  tape.backward(mean(scores));

  double norm = 0.0;
  for (std::int64_t i = 0; i < maps.numel(); ++i) norm += std::abs(maps.grad()[i]);
  CHECK(norm > 0.0);
}
