#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mccl/gcam.hpp"
#include "mccl/ops.hpp"
#include "oracles.hpp"

using namespace mccl;

namespace {

template <typename S>
Tensor<S> rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<S>::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

// a parameter store holding just the gcam projections for channel count c
template <typename S>
ParamStore<S> gcam_params(int c, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.channels = {2, 4, c / 2, c};
  Rng rng(seed);
  ParamStore<S> ps;
  build_generator_params(ps, cfg, rng);
  return ps;
}

std::vector<std::vector<float>> batch_rows(const Tensor32& t) {
  const std::int64_t row = t.numel() / t.dim(0);
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < t.dim(0); ++i)
    rows.emplace_back(t.data() + i * row, t.data() + (i + 1) * row);
  return rows;
}

}  // namespace

TEST_CASE("split_shuffle: identity permutation and determinism") {
  Rng rng(41);
  auto feat = rand_tensor<float>({4, 2, 2, 2}, rng);
  auto [a, b] = split_shuffle(feat, std::vector<int>{0, 1, 2, 3});
  CHECK(a.shape() == Shape{2, 2, 2, 2});
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    CHECK(a[i] == feat[i]);
    CHECK(b[i] == feat[a.numel() + i]);
  }

  auto [a1, b1] = split_shuffle(feat, std::uint64_t{7});
  auto [a2, b2] = split_shuffle(feat, std::uint64_t{7});
  for (std::int64_t i = 0; i < a1.numel(); ++i) {
    CHECK(a1[i] == a2[i]);
    CHECK(b1[i] == b2[i]);
  }
}

TEST_CASE("split_shuffle preserves the image multiset over random seeds") {
  Rng rng(42);
  auto feat = rand_tensor<float>({6, 3, 2, 2}, rng);
  auto original = batch_rows(feat);
  std::sort(original.begin(), original.end());
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [a, b] = split_shuffle(feat, seed);
    auto rows = batch_rows(concat<float>({a, b}, 0));
    std::sort(rows.begin(), rows.end());
    REQUIRE(rows == original);
  }
}

TEST_CASE("split_shuffle rejects odd group sizes") {
  auto feat = Tensor32::zeros({3, 2, 2, 2});
  CHECK_THROWS_AS(split_shuffle(feat, std::uint64_t{0}), ContractError);
}

TEST_CASE("nonlocal consensus with zero value/output projections is residual") {
  const int c = 8;
  auto ps = gcam_params<float>(c, 43);
  for (const char* name : {"gcam/v.w", "gcam/v.b", "gcam/o.b"}) {
    auto& t = ps.p(name);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0f;
  }
  Rng rng(44);
  auto a = rand_tensor<float>({2, c, 2, 2}, rng);
  auto b = rand_tensor<float>({2, c, 2, 2}, rng);
  auto [ap, bp] = nonlocal_consensus(a, b, ps);
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    CHECK(ap[i] == doctest::Approx(a[i]));
    CHECK(bp[i] == doctest::Approx(b[i]));
  }
}

TEST_CASE("nonlocal consensus matches the naive attention oracle") {
  const int c = 4;
  auto ps = gcam_params<double>(c, 45);
  Rng rng(46);
  auto a = rand_tensor<double>({1, c, 2, 2}, rng);
  auto b = rand_tensor<double>({1, c, 2, 2}, rng);
  auto [ap, bp] = nonlocal_consensus(a, b, ps);
  auto got = concat<double>({ap, bp}, 0);

  auto expect = oracle::naive_attention(
      concat<double>({a, b}, 0), ps.p("gcam/q.w"), ps.p("gcam/q.b"), ps.p("gcam/k.w"),
      ps.p("gcam/k.b"), ps.p("gcam/v.w"), ps.p("gcam/v.b"), ps.p("gcam/o.w"),
      ps.p("gcam/o.b"));
  for (std::int64_t i = 0; i < got.numel(); ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("depthwise_fuse closed forms") {
  Rng rng(47);
  auto orig = rand_tensor<float>({3, 2, 2, 2}, rng);

  auto ones = Tensor32::full(orig.shape(), 1.0f);
  auto fused = depthwise_fuse(orig, ones);
  CHECK(fused.shape() == Shape{3, 4, 2, 2});
  for (int b = 0; b < 3; ++b)
    for (int cc = 0; cc < 2; ++cc)
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
          CHECK(fused.at(b, cc, y, x) == doctest::Approx(orig.at(b, cc, y, x)));
          CHECK(fused.at(b, cc + 2, y, x) == 1.0f);
        }

  auto zeros = depthwise_fuse(orig, Tensor32::zeros(orig.shape()));
  for (int b = 0; b < 3; ++b)
    for (int cc = 0; cc < 2; ++cc)
      for (std::int64_t i = 0; i < 4; ++i)
        CHECK(zeros[(static_cast<std::int64_t>(b) * 4 + cc) * 4 + i] == 0.0f);
}

TEST_CASE("depthwise_fuse applies the pooled per-channel kernel") {
  Rng rng(48);
  auto orig = rand_tensor<float>({2, 3, 2, 2}, rng);
  auto cons = rand_tensor<float>({2, 3, 2, 2}, rng);
  auto out = depthwise_fuse(orig, cons);
  for (int c = 0; c < 3; ++c) {
    double mean_c = 0.0;
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 4; ++i)
        mean_c += cons[(static_cast<std::int64_t>(b) * 3 + c) * 4 + i];
    mean_c /= 8.0;
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 4; ++i)
        CHECK(out[(static_cast<std::int64_t>(b) * 6 + c) * 4 + i] ==
              doctest::Approx(mean_c * orig[(static_cast<std::int64_t>(b) * 3 + c) * 4 + i])
                  .epsilon(1e-5));
  }
}

TEST_CASE("gcam_forward output shape and constant pooling") {
  const int c = 8;
  auto ps = gcam_params<float>(c, 49);
  Rng rng(50);
  GroupFeature<float> g{"grp", rand_tensor<float>({4, c, 2, 2}, rng)};
  auto out = gcam_forward(g, ps, std::uint64_t{3});
  CHECK(out.feat_out.shape() == Shape{4, 2 * c, 2, 2});
  CHECK(out.vec_a.shape() == Shape{2 * c});
  CHECK(out.class_id == "grp");
  CHECK(out.half_a.size() == 2);
  CHECK(out.half_b.size() == 2);

  // constant feat_out pools to the constant: zero attention, constant input
  for (const char* name : {"gcam/v.w", "gcam/v.b", "gcam/o.b"}) {
    auto& t = ps.p(name);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0f;
  }
  GroupFeature<float> ones{"ones", Tensor32::full({4, c, 2, 2}, 1.0f)};
  auto pooled = gcam_forward(ones, ps, std::uint64_t{3});
  for (std::int64_t i = 0; i < pooled.vec_a.numel(); ++i) {
    CHECK(pooled.vec_a[i] == doctest::Approx(1.0f));
    CHECK(pooled.vec_b[i] == doctest::Approx(1.0f));
  }
}

TEST_CASE("gcam_forward is equivariant to a consistent image permutation") {
  const int c = 4;
  auto ps = gcam_params<float>(c, 51);
  Rng rng(52);
  const int s = 4;
  GroupFeature<float> g{"grp", rand_tensor<float>({s, c, 2, 2}, rng)};

  const std::vector<int> perm{2, 0, 3, 1};  // shuffle used by run 1
  auto out1 = gcam_forward(g, ps, perm);

  const std::vector<int> pi{1, 3, 0, 2};  // reorder the input images by pi
  std::vector<int> pi_inv(s);
  for (int i = 0; i < s; ++i) pi_inv[static_cast<std::size_t>(pi[static_cast<std::size_t>(i)])] = i;
  GroupFeature<float> g2{"grp", permute_batch(g.feat, pi)};
  // run 2 shuffles with pi^-1 o perm so the same images meet in attention
  std::vector<int> perm2(s);
  for (int i = 0; i < s; ++i) perm2[static_cast<std::size_t>(i)] = pi_inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  auto out2 = gcam_forward(g2, ps, perm2);

  auto expect = permute_batch(out1.feat_out, pi);
  for (std::int64_t i = 0; i < expect.numel(); ++i)
    CHECK(out2.feat_out[i] == doctest::Approx(expect[i]).epsilon(1e-5));
  for (std::int64_t i = 0; i < out1.vec_a.numel(); ++i) {
    CHECK(out2.vec_a[i] == doctest::Approx(out1.vec_a[i]).epsilon(1e-5));
    CHECK(out2.vec_b[i] == doctest::Approx(out1.vec_b[i]).epsilon(1e-5));
  }
}

TEST_CASE("gradients flow from feat_out to every input image") {
  const int c = 4;
  auto ps = gcam_params<float>(c, 53);
  Rng rng(54);
  GroupFeature<float> g{"grp", rand_tensor<float>({4, c, 2, 2}, rng)};
  g.feat.set_requires_grad(true);

  Tape<float> tape;
  auto out = gcam_forward(g, ps, std::uint64_t{5});
  tape.backward(sum(out.feat_out));

  const std::int64_t row = g.feat.numel() / 4;
  for (int img = 0; img < 4; ++img) {
    double norm = 0.0;
    for (std::int64_t i = 0; i < row; ++i)
      norm += std::abs(g.feat.grad()[img * row + i]);
    CHECK(norm > 0.0);
  }
}
