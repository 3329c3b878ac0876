#include <cmath>
#include <functional>

#include "mccl/ail.hpp"
#include "mccl/gcam.hpp"
#include "mccl/gradcheck.hpp"
#include "mccl/losses.hpp"
#include "mccl/mcm.hpp"
#include "mccl/model.hpp"
#include "mccl/ops.hpp"
#include "mccl/rng.hpp"
#include "mccl/trainer.hpp"

namespace mccl {

namespace {

using T = Tensor<double>;
using F = std::function<T(const T&)>;

constexpr double kH = 1e-5;
constexpr double kOpThreshold = 1e-4;
constexpr double kModelThreshold = 1e-3;

T rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = T::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// values bounded away from zero, for kinked ops
T rand_tensor_away(Shape shape, Rng& rng, double lo, double hi) {
  auto t = T::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(lo, hi);
    t[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// weighted sum makes any op output a scalar sensitive to every element
T weighted(const T& y, const T& w) { return sum(mul(y, w)); }

struct Suite {
  std::vector<GradCheckResult> results;
  Rng rng;

  explicit Suite(std::uint64_t seed) : rng(seed) {}

  void check(const std::string& name, const F& f, const T& x,
             double threshold = kOpThreshold) {
    const double err = grad_check<double>(f, x, kH);
    auto& r = results.emplace_back();
    r.name = name;
    r.max_rel_err = err;
    r.threshold = threshold;
    r.pass = err < threshold;
  }

  // for losses over tensors embedded in a model: perturbs x in place
  void check_inplace(const std::string& name, const std::function<T()>& f, T x,
                     double threshold = kOpThreshold) {
    const double err = grad_check<double>(f, x, kH);
    auto& r = results.emplace_back();
    r.name = name;
    r.max_rel_err = err;
    r.threshold = threshold;
    r.pass = err < threshold;
  }

  // merges repeated trials of one entry into the worst error
  void check_trials(const std::string& name, int trials,
                    const std::function<void(int)>& one) {
    const std::size_t first = results.size();
    for (int t = 0; t < trials; ++t) one(t);
    GradCheckResult merged = results[first];
    for (std::size_t i = first + 1; i < results.size(); ++i) {
      merged.max_rel_err = std::max(merged.max_rel_err, results[i].max_rel_err);
      merged.pass = merged.pass && results[i].pass;
    }
    merged.name = name;
    results.resize(first);
    results.push_back(merged);
  }
};

void check_elementwise(Suite& s) {
  const Shape shapes[3] = {{5}, {3, 4}, {2, 3, 2, 2}};
  for (const char* op : {"add", "sub", "mul", "div", "add_scalar", "mul_scalar"}) {
    const std::string name = op;
    s.check_trials(name, 3, [&](int t) {
      auto x = rand_tensor(shapes[t], s.rng);
      auto w = rand_tensor(shapes[t], s.rng);
      T other = name == "div" ? rand_tensor_away(shapes[t], s.rng, 0.6, 1.6)
                              : rand_tensor(shapes[t], s.rng);
      F f;
      if (name == "add") f = [=](const T& v) { return weighted(add(v, other), w); };
      if (name == "sub") f = [=](const T& v) { return weighted(sub(other, v), w); };
      if (name == "mul") f = [=](const T& v) { return weighted(mul(v, other), w); };
      if (name == "div") f = [=](const T& v) { return weighted(div(v, other), w); };
      if (name == "add_scalar") f = [=](const T& v) { return weighted(add_scalar(v, 0.7), w); };
      if (name == "mul_scalar") f = [=](const T& v) { return weighted(mul_scalar(v, -1.3), w); };
      s.check(name, f, x);
    });
  }
}

void check_pointwise(Suite& s) {
  const Shape shapes[3] = {{7}, {2, 5}, {2, 2, 3, 3}};
  s.check_trials("relu", 3, [&](int t) {
    auto w = rand_tensor(shapes[t], s.rng);
    s.check("relu", [=](const T& v) { return weighted(relu(v), w); },
            rand_tensor_away(shapes[t], s.rng, 0.1, 1.0));
  });
  s.check_trials("leaky_relu", 3, [&](int t) {
    auto w = rand_tensor(shapes[t], s.rng);
    s.check("leaky_relu", [=](const T& v) { return weighted(leaky_relu(v, 0.2), w); },
            rand_tensor_away(shapes[t], s.rng, 0.1, 1.0));
  });
  s.check_trials("sigmoid", 3, [&](int t) {
    auto w = rand_tensor(shapes[t], s.rng);
    s.check("sigmoid", [=](const T& v) { return weighted(sigmoid(v), w); },
            rand_tensor(shapes[t], s.rng, -2.0, 2.0));
  });
  s.check_trials("log_clamped", 3, [&](int t) {
    auto w = rand_tensor(shapes[t], s.rng);
    s.check("log_clamped", [=](const T& v) { return weighted(log_clamped(v), w); },
            rand_tensor(shapes[t], s.rng, 0.2, 2.0));
  });
  s.check_trials("clamp", 3, [&](int t) {
    auto w = rand_tensor(shapes[t], s.rng);
    s.check("clamp", [=](const T& v) { return weighted(clamp(v, -0.8, 0.8), w); },
            rand_tensor(shapes[t], s.rng, -0.6, 0.6));
  });
}

void check_structure(Suite& s) {
  s.check_trials("reshape", 3, [&](int t) {
    const Shape in[3] = {{6}, {2, 6}, {2, 3, 2}};
    const Shape to[3] = {{2, 3}, {3, 4}, {12}};
    auto w = rand_tensor(to[t], s.rng);
    s.check("reshape", [=, shape = to[t]](const T& v) { return weighted(reshape(v, shape), w); },
            rand_tensor(in[t], s.rng));
  });
  s.check_trials("transpose2d", 3, [&](int t) {
    const Shape in[3] = {{2, 3}, {4, 4}, {5, 2}};
    const Shape to[3] = {{3, 2}, {4, 4}, {2, 5}};
    auto w = rand_tensor(to[t], s.rng);
    s.check("transpose2d", [=](const T& v) { return weighted(transpose2d(v), w); },
            rand_tensor(in[t], s.rng));
  });
  s.check_trials("concat", 3, [&](int t) {
    const int axis = t % 2;
    const Shape in{2, 3};
    auto other = rand_tensor(in, s.rng);
    Shape out_shape = in;
    out_shape[static_cast<std::size_t>(axis)] *= 2;
    auto w = rand_tensor(out_shape, s.rng);
    s.check("concat",
            [=](const T& v) { return weighted(concat<double>({v, other}, axis), w); },
            rand_tensor(in, s.rng));
  });
  s.check_trials("slice", 3, [&](int t) {
    const Shape in{4, 5};
    const int axis = t % 2, start = 1, len = 2;
    Shape out_shape = in;
    out_shape[static_cast<std::size_t>(axis)] = len;
    auto w = rand_tensor(out_shape, s.rng);
    s.check("slice", [=](const T& v) { return weighted(slice(v, axis, start, len), w); },
            rand_tensor(in, s.rng));
  });
  s.check_trials("permute_batch", 3, [&](int t) {
    const Shape in{4, 3};
    std::vector<int> perm = s.rng.permutation(4);
    auto w = rand_tensor(in, s.rng);
    s.check("permute_batch",
            [=](const T& v) { return weighted(permute_batch(v, perm), w); },
            rand_tensor(in, s.rng));
  });
  s.check_trials("flatten_positions", 3, [&](int t) {
    const Shape in{2, 3, 2, 2};
    auto w = rand_tensor({8, 3}, s.rng);
    s.check("flatten_positions",
            [=](const T& v) { return weighted(flatten_positions(v), w); },
            rand_tensor(in, s.rng));
  });
  s.check_trials("unflatten_positions", 3, [&](int t) {
    auto w = rand_tensor({2, 3, 2, 2}, s.rng);
    s.check("unflatten_positions",
            [=](const T& v) { return weighted(unflatten_positions(v, 2, 2, 2), w); },
            rand_tensor({8, 3}, s.rng));
  });
}

void check_linear(Suite& s) {
  s.check_trials("matmul/lhs", 3, [&](int t) {
    const int m = 2 + t, k = 3, n = 4 - t % 2;
    auto b = rand_tensor({k, n}, s.rng);
    auto w = rand_tensor({m, n}, s.rng);
    s.check("matmul/lhs", [=](const T& v) { return weighted(matmul(v, b), w); },
            rand_tensor({m, k}, s.rng));
  });
  s.check_trials("matmul/rhs", 3, [&](int t) {
    const int m = 2, k = 3 + t, n = 2 + t;
    auto a = rand_tensor({m, k}, s.rng);
    auto w = rand_tensor({m, n}, s.rng);
    s.check("matmul/rhs", [=](const T& v) { return weighted(matmul(a, v), w); },
            rand_tensor({k, n}, s.rng));
  });

  struct ConvCase {
    Shape x, w;
    int stride, pad;
  };
  const ConvCase cases[3] = {{{2, 3, 6, 6}, {4, 3, 3, 3}, 1, 1},
                             {{1, 2, 6, 6}, {3, 2, 4, 4}, 2, 1},
                             {{2, 4, 5, 5}, {3, 4, 1, 1}, 1, 0}};
  for (const char* which : {"input", "kernel", "bias"}) {
    const std::string name = std::string("conv2d/") + which;
    s.check_trials(name, 3, [&, name](int t) {
      const auto& c = cases[t];
      auto x = rand_tensor(c.x, s.rng);
      auto w = rand_tensor(c.w, s.rng);
      auto b = rand_tensor({c.w[0]}, s.rng);
      const int oh = (c.x[2] + 2 * c.pad - c.w[2]) / c.stride + 1;
      const int ow = (c.x[3] + 2 * c.pad - c.w[3]) / c.stride + 1;
      auto wt = rand_tensor({c.x[0], c.w[0], oh, ow}, s.rng);
      F f;
      if (name == "conv2d/input")
        f = [=](const T& v) { return weighted(conv2d(v, w, b, c.stride, c.pad), wt); };
      else if (name == "conv2d/kernel")
        f = [=](const T& v) { return weighted(conv2d(x, v, b, c.stride, c.pad), wt); };
      else
        f = [=](const T& v) { return weighted(conv2d(x, w, v, c.stride, c.pad), wt); };
      s.check(name, f, name == "conv2d/input" ? x : (name == "conv2d/kernel" ? w : b));
    });
  }

  for (const char* which : {"input", "kernel"}) {
    const std::string name = std::string("depthwise_conv2d/") + which;
    s.check_trials(name, 3, [&, name](int t) {
      const Shape xs{2, 3 + t, 3, 3};
      auto x = rand_tensor(xs, s.rng);
      auto k = rand_tensor({xs[1]}, s.rng);
      auto wt = rand_tensor(xs, s.rng);
      if (name == "depthwise_conv2d/input") {
        s.check(name, [=](const T& v) { return weighted(depthwise_conv2d(v, k), wt); }, x);
      } else {
        s.check(name, [=](const T& v) { return weighted(depthwise_conv2d(x, v), wt); }, k);
      }
    });
  }
}

void check_norm_pool(Suite& s) {
  s.check_trials("softmax", 3, [&](int t) {
    const Shape shapes[3] = {{4, 6}, {6, 4}, {2, 3, 4}};
    const int axis[3] = {1, 0, 2};
    auto w = rand_tensor(shapes[t], s.rng);
    s.check("softmax", [=, a = axis[t]](const T& v) { return weighted(softmax(v, a), w); },
            rand_tensor(shapes[t], s.rng, -2.0, 2.0));
  });

  for (const char* which : {"input", "gamma", "beta"}) {
    const std::string name = std::string("batch_norm/") + which;
    s.check_trials(name, 3, [&, name](int t) {
      const Shape xs{2 + t, 3, 2, 2};
      auto x = rand_tensor(xs, s.rng);
      auto gamma = rand_tensor({3}, s.rng, 0.5, 1.5);
      auto beta = rand_tensor({3}, s.rng);
      auto wt = rand_tensor(xs, s.rng);
      auto f_with = [=](const T& xv, const T& gv, const T& bv) {
        auto rm = T::zeros({3});
        auto rv = T::full({3}, 1.0);
        return weighted(batch_norm(xv, gv, bv, rm, rv, true), wt);
      };
      if (name == "batch_norm/input") {
        s.check(name, [=](const T& v) { return f_with(v, gamma, beta); }, x);
      } else if (name == "batch_norm/gamma") {
        s.check(name, [=](const T& v) { return f_with(x, v, beta); }, gamma);
      } else {
        s.check(name, [=](const T& v) { return f_with(x, gamma, v); }, beta);
      }
    });
  }

  s.check_trials("global_avg_pool", 3, [&](int t) {
    const Shape xs{2, 2 + t, 3, 3};
    auto w = rand_tensor({2, 2 + t}, s.rng);
    s.check("global_avg_pool",
            [=](const T& v) { return weighted(global_avg_pool(v), w); },
            rand_tensor(xs, s.rng));
  });
  s.check_trials("mean_axis0", 3, [&](int t) {
    const Shape xs{3 + t, 4};
    auto w = rand_tensor({4}, s.rng);
    s.check("mean_axis0", [=](const T& v) { return weighted(mean_axis0(v), w); },
            rand_tensor(xs, s.rng));
  });
  s.check_trials("bilinear_resize", 3, [&](int t) {
    const Shape xs{1, 2, 3 + t, 4};
    const int oh = 5, ow = 6 - t;
    auto w = rand_tensor({1, 2, oh, ow}, s.rng);
    s.check("bilinear_resize",
            [=](const T& v) { return weighted(bilinear_resize(v, oh, ow), w); },
            rand_tensor(xs, s.rng));
  });
}

void check_reductions(Suite& s) {
  const Shape shapes[3] = {{6}, {3, 5}, {2, 2, 3}};
  s.check_trials("sum", 3, [&](int t) {
    s.check("sum", [](const T& v) { return sum(v); }, rand_tensor(shapes[t], s.rng));
  });
  s.check_trials("mean", 3, [&](int t) {
    s.check("mean", [](const T& v) { return mean(v); }, rand_tensor(shapes[t], s.rng));
  });
  s.check_trials("l2_norm", 3, [&](int t) {
    s.check("l2_norm", [](const T& v) { return l2_norm(v); },
            rand_tensor_away(shapes[t], s.rng, 0.3, 1.0));
  });
}

T random_binary(Shape shape, Rng& rng, double p_fg = 0.4) {
  auto t = T::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform() < p_fg ? 1.0 : 0.0;
  return t;
}

void check_losses(Suite& s) {
  s.check_trials("loss/bce", 3, [&](int t) {
    const Shape xs{2, 1, 3 + t, 4};
    auto gt = random_binary(xs, s.rng);
    s.check("loss/bce", [=](const T& z) { return bce_loss(sigmoid(z), gt); },
            rand_tensor(xs, s.rng, -2.0, 2.0));
  });
  s.check_trials("loss/iou", 3, [&](int t) {
    const Shape xs{2, 1, 3 + t, 4};
    auto gt = random_binary(xs, s.rng);
    s.check("loss/iou", [=](const T& z) { return iou_loss(sigmoid(z), gt); },
            rand_tensor(xs, s.rng, -2.0, 2.0));
  });
  s.check_trials("loss/mcm", 3, [&](int t) {
    const int d = 4 + t;
    ConsensusMemory<double> mem(0.1, 0.1);
    auto a1 = rand_tensor({d}, s.rng), b1 = rand_tensor({d}, s.rng);
    auto a2 = rand_tensor({d}, s.rng), b2 = rand_tensor({d}, s.rng);
    mem.update("c1", a1, b1);
    mem.update("c2", a2, b2);
    auto b1_live = rand_tensor({d}, s.rng);
    auto a2_live = rand_tensor({d}, s.rng), b2_live = rand_tensor({d}, s.rng);
    s.check("loss/mcm",
            [=, &mem](const T& v) {
              std::map<std::string, std::pair<T, T>> live{
                  {"c1", {v, b1_live}}, {"c2", {a2_live, b2_live}}};
              return mcm_loss<double>({"c1", "c2"}, mem, live);
            },
            rand_tensor({d}, s.rng));
  });

  // adversarial pieces on a 16x16 micro discriminator
  Rng disc_rng(s.rng.next_u64());
  ParamStore<double> disc;
  build_discriminator_params(disc, disc_rng);
  const Shape map_shape{2, 1, 16, 16};
  const Shape img_shape{2, 3, 16, 16};
  auto source = rand_tensor(img_shape, s.rng, 0.0, 1.0);
  s.check_trials("loss/adversarial", 3, [&](int t) {
    s.check("loss/adversarial",
            [=, &disc](const T& z) {
              return adv_generator_loss(sigmoid(z), source, disc, true);
            },
            rand_tensor(map_shape, s.rng, -1.5, 1.5));
  });
  s.check_trials("loss/disc", 3, [&](int) {
    auto pred = rand_tensor(map_shape, s.rng, 0.1, 0.9);
    auto gt = random_binary(map_shape, s.rng);
    disc.set_requires_grad(true);
    auto w = disc.p("disc/b1.w");
    s.check_inplace("loss/disc",
                    [=, &disc]() { return disc_loss(pred, gt, source, disc, 3.0, true); },
                    w);
    disc.set_requires_grad(false);
  });

  s.check_trials("chain/conv-softmax", 3, [&](int t) {
    const Shape xs{1, 2, 4 + t, 4};
    auto w = rand_tensor({3, 2, 3, 3}, s.rng);
    auto b = rand_tensor({3}, s.rng);
    auto mix = rand_tensor({3, (4 + t) * 4}, s.rng);
    s.check("chain/conv-softmax",
            [=](const T& v) {
              auto y = conv2d(v, w, b, 1, 1);
              auto sm = softmax(reshape(y, {y.dim(0) * y.dim(1), y.dim(2) * y.dim(3)}), 1);
              return sum(mul(sm, mix));
            },
            rand_tensor(xs, s.rng));
  });
}

// Eq. 8 objective through the whole generator at micro scale
void check_full_model(Suite& s) {
  ModelConfig mc;
  mc.channels = {2, 4, 8, 16};
  Rng init(derive_seed(9, tag_hash("model-init")));
  ParamStore<double> gen;
  build_generator_params(gen, mc, init);
  Rng dinit(derive_seed(9, tag_hash("disc-init")));
  ParamStore<double> disc;
  build_discriminator_params(disc, dinit);

  const int size = 32, per_group = 2;
  const std::vector<std::string> ids{"g0", "g1"};
  auto images = rand_tensor({4, 3, size, size}, s.rng, 0.0, 1.0);
  auto gts = random_binary({4, 1, size, size}, s.rng, 0.3);
  std::vector<std::vector<int>> perms{make_split_perm(per_group, 1),
                                      make_split_perm(per_group, 2)};

  ConsensusMemory<double> memory(0.1, 0.1);
  {
    auto warm = generator_forward(images, ids, per_group, gen, mc, true, perms, true);
    for (const auto& id : ids) {
      const auto& [va, vb] = warm.live_vecs.at(id);
      memory.update(id, va, vb);
    }
  }

  LossWeights w;
  auto objective = [&]() {
    auto fwd = generator_forward(images, ids, per_group, gen, mc, true, perms, true);
    auto bce = bce_loss(fwd.pred, gts);
    auto iou = iou_loss(fwd.pred, gts);
    auto mcm = mcm_loss(ids, memory, fwd.live_vecs);
    auto adv = adv_generator_loss(fwd.pred, images, disc, true);
    return total_generator_loss(bce, iou, mcm, adv, w);
  };

  for (const char* pname :
       {"enc/stem.w", "gcam/o.w", "lat/1.w", "dec/head.w", "dec/b1/conv1.b"}) {
    gen.set_requires_grad(true);
    const double err = grad_check<double>(objective, gen.p(pname), kH);
    gen.set_requires_grad(false);
    auto& r = s.results.emplace_back();
    r.name = std::string("full-model/") + pname;
    r.max_rel_err = err;
    r.threshold = kModelThreshold;
    r.pass = err < kModelThreshold;
  }
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
  Suite s(derive_seed(seed, tag_hash("gradcheck")));
  check_elementwise(s);
  check_pointwise(s);
  check_structure(s);
  check_linear(s);
  check_norm_pool(s);
  check_reductions(s);
  check_losses(s);
  check_full_model(s);
  return s.results;
}

}  // namespace mccl
