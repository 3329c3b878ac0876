#include <doctest.h>

#include <cmath>

#include "mccl/gradcheck.hpp"
#include "mccl/model.hpp"
#include "mccl/ops.hpp"
#include "oracles.hpp"

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
ParamStore<S> fresh_generator(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<S> ps;
  build_generator_params(ps, cfg, rng);
  return ps;
}

}  // namespace

TEST_CASE("encode produces the documented stage shapes") {
  ModelConfig cfg;
  auto ps = fresh_generator<float>(cfg, 1);
  Rng rng(2);
  auto images = rand_tensor<float>({4, 3, 64, 64}, rng);
  auto feats = encode(images, ps, cfg, false);
  CHECK(feats.lat1.shape() == Shape{4, 16, 16, 16});
  CHECK(feats.lat2.shape() == Shape{4, 32, 8, 8});
  CHECK(feats.lat3.shape() == Shape{4, 64, 4, 4});
  CHECK(feats.final_.shape() == Shape{4, 128, 2, 2});
}

TEST_CASE("encode rejects sizes not divisible by 32") {
  ModelConfig cfg;
  auto ps = fresh_generator<float>(cfg, 1);
  CHECK_THROWS_AS(encode(Tensor32::zeros({1, 3, 48, 48}), ps, cfg, false), ShapeError);
}

TEST_CASE("zero input with zero-bias params yields zero features") {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  auto ps = fresh_generator<float>(cfg, 3);  // biases zero-initialized
  auto feats = encode(Tensor32::zeros({2, 3, 32, 32}), ps, cfg, false);
  for (const auto* f : {&feats.lat1, &feats.lat2, &feats.lat3, &feats.final_})
    for (std::int64_t i = 0; i < f->numel(); ++i) CHECK((*f)[i] == 0.0f);
}

TEST_CASE("encode is deterministic for a fixed seed") {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  Rng irng(9);
  auto images = rand_tensor<float>({2, 3, 32, 32}, irng);
  auto ps1 = fresh_generator<float>(cfg, 42);
  auto ps2 = fresh_generator<float>(cfg, 42);
  auto f1 = encode(images, ps1, cfg, false);
  auto f2 = encode(images, ps2, cfg, false);
  for (std::int64_t i = 0; i < f1.final_.numel(); ++i)
    CHECK(f1.final_[i] == f2.final_[i]);
}

TEST_CASE("lateral projection: identity and zero kernels") {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  auto ps = fresh_generator<float>(cfg, 4);
  Rng rng(5);
  auto f = rand_tensor<float>({2, 4, 8, 8}, rng);

  auto& w = ps.p("lat/1.w");
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = 0.0f;
  for (int c = 0; c < 4; ++c) w[static_cast<std::int64_t>(c) * 4 + c] = 1.0f;
  auto ident = lateral_project(f, 1, ps);
  for (std::int64_t i = 0; i < f.numel(); ++i) CHECK(ident[i] == f[i]);

  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = 0.0f;
  auto zeros = lateral_project(f, 1, ps);
  for (std::int64_t i = 0; i < zeros.numel(); ++i) CHECK(zeros[i] == 0.0f);
}

TEST_CASE("decode returns logits at the input size; zero params give zero logits") {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  auto ps = fresh_generator<float>(cfg, 6);
  Rng rng(7);
  auto images = rand_tensor<float>({4, 3, 64, 64}, rng);
  auto feats = encode(images, ps, cfg, false);
  auto consensus = concat<float>({feats.final_, feats.final_}, 1);
  auto logits = decode(consensus, feats, ps, cfg, false);
  CHECK(logits.shape() == Shape{4, 1, 64, 64});

  for (auto& [name, t] : ps.params)
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0f;
  auto zero_logits = decode(consensus, feats, ps, cfg, false);
  for (std::int64_t i = 0; i < zero_logits.numel(); ++i) CHECK(zero_logits[i] == 0.0f);
}

TEST_CASE("zeroing laterals still yields a valid forward pass") {
  ModelConfig cfg;
  cfg.channels = {4, 8, 16, 32};
  auto ps = fresh_generator<float>(cfg, 8);
  for (int s = 1; s <= 3; ++s) {
    auto& w = ps.p("lat/" + std::to_string(s) + ".w");
    for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = 0.0f;
  }
  Rng rng(9);
  auto images = rand_tensor<float>({2, 3, 32, 32}, rng);
  auto feats = encode(images, ps, cfg, false);
  auto logits = decode(concat<float>({feats.final_, feats.final_}, 1), feats, ps, cfg, false);
  CHECK(logits.shape() == Shape{2, 1, 32, 32});
}

TEST_CASE("gradient reaches the first encoder conv through the whole path") {
  ModelConfig cfg;
  cfg.channels = {2, 4, 8, 16};
  auto ps = fresh_generator<float>(cfg, 10);
  ps.set_requires_grad(true);
  Rng rng(11);
  auto images = rand_tensor<float>({2, 3, 32, 32}, rng);

  Tape<float> tape;
  auto feats = encode(images, ps, cfg, true);
  auto logits = decode(concat<float>({feats.final_, feats.final_}, 1), feats, ps, cfg, true);
  tape.backward(mean(logits));

  double norm = 0.0;
  const auto& g = ps.p("enc/stem.w").grad_vec();
  for (float v : g) norm += std::abs(v);
  CHECK(norm > 0.0);
}

TEST_CASE("full-model 32-bit gradient agreement on a micro config") {
  ModelConfig cfg;
  cfg.channels = {2, 4, 8, 16};
  auto ps = fresh_generator<float>(cfg, 12);
  Rng rng(13);
  auto images = rand_tensor<float>({2, 3, 32, 32}, rng);

  auto loss_fn = [&]() {
    auto feats = encode(images, ps, cfg, true);
    auto logits = decode(concat<float>({feats.final_, feats.final_}, 1), feats, ps, cfg, true);
    return mean(mul(logits, logits));
  };
  ps.set_requires_grad(true);
  const double err = grad_check<float>(loss_fn, ps.p("dec/head.w"), 1e-2);
  CHECK(err < 1e-2);
}

TEST_CASE("predict_maps: sigmoid of zero logits is one half, clamped above") {
  auto logits = Tensor32::zeros({2, 1, 8, 8});
  auto maps = predict_maps(logits, {{8, 8}, {4, 6}});
  REQUIRE(maps.size() == 2);
  CHECK(maps[0].shape() == Shape{8, 8});
  CHECK(maps[1].shape() == Shape{4, 6});
  for (std::int64_t i = 0; i < maps[0].numel(); ++i)
    CHECK(maps[0][i] == doctest::Approx(0.5f));

  auto big = Tensor32::full({1, 1, 4, 4}, 1000.0f);
  auto clamped = predict_maps(big, {{4, 4}});
  for (std::int64_t i = 0; i < clamped[0].numel(); ++i)
    CHECK(clamped[0][i] <= 1.0f - 1e-7f);
}

TEST_CASE("predict_maps resize matches the bilinear oracle") {
  Rng rng(14);
  auto logits = rand_tensor<float>({1, 1, 64, 64}, rng, -3.0, 3.0);
  auto maps = predict_maps(logits, {{100, 80}});
  auto probs = clamp(sigmoid(logits), 1e-7, 1.0 - 1e-7);
  auto expect = oracle::naive_bilinear(probs, 100, 80);
  for (std::int64_t i = 0; i < maps[0].numel(); ++i)
    CHECK(maps[0][i] == doctest::Approx(expect[i]).epsilon(1e-5));
}
