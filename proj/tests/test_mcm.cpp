#include <doctest.h>

#include <cmath>

#include "mccl/gradcheck.hpp"
#include "mccl/mcm.hpp"
#include "mccl/ops.hpp"
#include "mccl/rng.hpp"

using namespace mccl;

namespace {

template <typename S>
Tensor<S> rand_vec(int d, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<S>::zeros({d});
  for (int i = 0; i < d; ++i) t[i] = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

// recomputes the vector distance with its own arithmetic
template <typename S>
double independent_norm(const Tensor<S>& a, const Tensor<S>& b) {
  long double acc = 0.0L;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    acc += d * d;
  }
  return static_cast<double>(std::sqrt(acc));
}

}  // namespace

TEST_CASE("memory update follows the momentum rule") {
  ConsensusMemory<double> mem(0.1, 0.1);
  auto zero = Tensor64::zeros({3});
  mem.update("c", zero, zero);  // init both slots at 0
  auto v = Tensor64::from_data({3}, {1.0, -2.0, 3.0});
  mem.update("c", v, v);
  for (int i = 0; i < 3; ++i) {
    CHECK(mem.stored_a("c")[i] == doctest::Approx(0.9 * v[i]).epsilon(1e-12));
    CHECK(mem.stored_b("c")[i] == doctest::Approx(0.9 * v[i]).epsilon(1e-12));
  }
}

TEST_CASE("memory update fixed point") {
  ConsensusMemory<double> mem(0.1, 0.1);
  auto v = Tensor64::from_data({2}, {0.5, -0.25});
  mem.update("c", v, v);
  mem.update("c", v, v);
  for (int i = 0; i < 2; ++i) CHECK(mem.stored_a("c")[i] == v[i]);
}

TEST_CASE("memory update decays geometrically toward a constant input") {
  const double beta = 0.1;
  ConsensusMemory<double> mem(beta, 0.1);
  Rng rng(21);
  auto c0 = rand_vec<double>(6, rng);
  auto f = rand_vec<double>(6, rng);
  mem.update("c", c0, c0);
  const double base = independent_norm(c0, f);
  double expect = base;
  for (int t = 1; t <= 20; ++t) {
    mem.update("c", f, f);
    expect *= beta;
    const double got = independent_norm(mem.stored_a("c"), f);
    CHECK(got == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("beta = 0 makes the update an overwrite") {
  ConsensusMemory<double> mem(0.0, 0.1);
  Rng rng(22);
  auto a = rand_vec<double>(4, rng);
  mem.update("c", a, a);
  auto b = rand_vec<double>(4, rng);
  mem.update("c", b, b);
  for (int i = 0; i < 4; ++i) CHECK(mem.stored_a("c")[i] == b[i]);
}

TEST_CASE("memory rejects dimension changes and bad factors") {
  ConsensusMemory<float> mem(0.1, 0.1);
  mem.update("c", Tensor32::zeros({3}), Tensor32::zeros({3}));
  CHECK_THROWS_AS(mem.update("c", Tensor32::zeros({4}), Tensor32::zeros({4})),
                  ContractError);
  CHECK_THROWS_AS(ConsensusMemory<float>(1.0, 0.1), ContractError);
  CHECK_THROWS_AS(ConsensusMemory<float>(0.1, 0.0), ContractError);
}

TEST_CASE("triplet loss closed forms") {
  // coincident positive, unit-distance negative
  auto a = Tensor64::from_data({2}, {0.0, 0.0});
  auto b = Tensor64::from_data({2}, {0.0, 0.0});
  auto neg = Tensor64::from_data({2}, {1.0, 0.0});
  CHECK(triplet_loss(a, b, neg, 0.1).item() == doctest::Approx(-0.9).epsilon(1e-12));

  // degenerate i = j pair cancels to the margin
  Rng rng(23);
  auto x = rand_vec<double>(5, rng);
  auto y = rand_vec<double>(5, rng);
  CHECK(triplet_loss(x, y, y, 0.1).item() == doctest::Approx(0.1).epsilon(1e-12));

  // optional hinge clamps at zero
  CHECK(triplet_loss(a, b, neg, 0.1, true).item() == 0.0);
}

TEST_CASE("triplet loss matches an independent norm recomputation") {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = rand_vec<double>(8, rng);
    auto b = rand_vec<double>(8, rng);
    auto n = rand_vec<double>(8, rng);
    const double expect = independent_norm(a, b) - independent_norm(a, n) + 0.1;
    CHECK(triplet_loss(a, b, n, 0.1).item() == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("mcm loss: one fresh group degenerates to the margin") {
  ConsensusMemory<double> mem(0.1, 0.1);
  Rng rng(25);
  auto va = rand_vec<double>(4, rng);
  auto vb = rand_vec<double>(4, rng);
  mem.update("g", va, vb);  // fresh class: memory == live
  std::map<std::string, std::pair<Tensor64, Tensor64>> live{{"g", {va, vb}}};
  CHECK(mcm_loss<double>({"g"}, mem, live).item() == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("mcm loss: all-equal vectors collapse to the margin") {
  ConsensusMemory<double> mem(0.1, 0.1);
  auto v = Tensor64::from_data({3}, {0.4, -0.2, 0.9});
  mem.update("g1", v, v);
  mem.update("g2", v, v);
  std::map<std::string, std::pair<Tensor64, Tensor64>> live{{"g1", {v, v}},
                                                            {"g2", {v, v}}};
  CHECK(mcm_loss<double>({"g1", "g2"}, mem, live).item() ==
        doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("mcm loss matches the brute-force double loop") {
  Rng rng(26);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 6;
    ConsensusMemory<double> mem(0.1, 0.1);
    std::map<std::string, std::pair<Tensor64, Tensor64>> live;
    const std::vector<std::string> ids{"g1", "g2"};
    for (const auto& id : ids) {
      mem.update(id, rand_vec<double>(d, rng), rand_vec<double>(d, rng));
      live[id] = {rand_vec<double>(d, rng), rand_vec<double>(d, rng)};
    }
    double brute = 0.0;
    for (const auto& ci : ids)
      for (const auto& cj : ids) {
        brute += independent_norm(live[ci].first, live[ci].second) -
                 independent_norm(live[ci].first, mem.stored_b(cj)) + 0.1;
      }
    brute /= static_cast<double>(ids.size() * ids.size());
    CHECK(mcm_loss(ids, mem, live).item() == doctest::Approx(brute).epsilon(1e-6));
  }
}

TEST_CASE("mcm loss is permutation-invariant in class order") {
  Rng rng(27);
  ConsensusMemory<double> mem(0.1, 0.1);
  std::map<std::string, std::pair<Tensor64, Tensor64>> live;
  std::vector<std::string> ids{"a", "b", "c"};
  for (const auto& id : ids) {
    mem.update(id, rand_vec<double>(5, rng), rand_vec<double>(5, rng));
    live[id] = {rand_vec<double>(5, rng), rand_vec<double>(5, rng)};
  }
  const double forward = mcm_loss(ids, mem, live).item();
  std::vector<std::string> reversed{"c", "a", "b"};
  CHECK(mcm_loss(reversed, mem, live).item() == doctest::Approx(forward).epsilon(1e-12));
}

TEST_CASE("mcm gradients reach live anchors, never memory") {
  Rng rng(28);
  ConsensusMemory<double> mem(0.1, 0.1);
  const std::vector<std::string> ids{"g1", "g2"};
  std::map<std::string, std::pair<Tensor64, Tensor64>> live;
  for (const auto& id : ids) {
    mem.update(id, rand_vec<double>(5, rng), rand_vec<double>(5, rng));
    live[id] = {rand_vec<double>(5, rng), rand_vec<double>(5, rng)};
  }

  auto anchor = live["g1"].first;
  const double err = grad_check<double>(
      [&]() { return mcm_loss(ids, mem, live); }, anchor, 1e-6);
  CHECK(err < 1e-4);

  // memory hands out constants: no gradient slots exist on its tensors
  anchor.set_requires_grad(true);
  Tape<double> tape;
  auto loss = mcm_loss(ids, mem, live);
  tape.backward(loss);
  CHECK(mem.stored_b("g1").grad() == nullptr);
  CHECK(mem.stored_b("g2").grad() == nullptr);
}
