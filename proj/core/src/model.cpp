#include "mccl/model.hpp"

#include <cmath>

#include "mccl/error.hpp"
#include "mccl/ops.hpp"

namespace mccl {

template <typename S>
Tensor<S>& ParamStore<S>::p(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw CheckpointError("missing parameter " + name);
  return it->second;
}

template <typename S>
Tensor<S>& ParamStore<S>::buf(const std::string& name) {
  auto it = buffers.find(name);
  if (it == buffers.end()) throw CheckpointError("missing buffer " + name);
  return it->second;
}

template <typename S>
void ParamStore<S>::set_requires_grad(bool on) {
  for (auto& [name, t] : params) t.set_requires_grad(on);
}

template <typename S>
void ParamStore<S>::zero_grads() {
  for (auto& [name, t] : params) t.zero_grad();
}

namespace {

template <typename S>
Tensor<S> fanin_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
  auto t = Tensor<S>::zeros(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

template <typename S>
void add_conv(ParamStore<S>& ps, Rng& rng, const std::string& name, int cout,
              int cin, int k) {
  ps.params[name + ".w"] =
      fanin_uniform<S>({cout, cin, k, k}, static_cast<std::int64_t>(cin) * k * k, rng);
  ps.params[name + ".b"] = Tensor<S>::zeros({cout});
}

template <typename S>
void add_bn(ParamStore<S>& ps, const std::string& name, int c) {
  ps.params[name + ".g"] = Tensor<S>::full({c}, S(1));
  ps.params[name + ".beta"] = Tensor<S>::zeros({c});
  ps.buffers[name + ".rm"] = Tensor<S>::zeros({c});
  ps.buffers[name + ".rv"] = Tensor<S>::full({c}, S(1));
}

template <typename S>
void add_residual(ParamStore<S>& ps, Rng& rng, const std::string& prefix, int cin,
                  int cout) {
  add_conv(ps, rng, prefix + "/conv1", cout, cin, 3);
  add_bn(ps, prefix + "/bn1", cout);
  add_conv(ps, rng, prefix + "/conv2", cout, cout, 3);
  add_bn(ps, prefix + "/bn2", cout);
  if (cin != cout) {
    add_conv(ps, rng, prefix + "/proj", cout, cin, 1);
    add_bn(ps, prefix + "/bnp", cout);
  }
}

template <typename S>
Tensor<S> conv_bn_relu(const Tensor<S>& x, ParamStore<S>& ps, const std::string& name,
                       int stride, int pad, bool training) {
  auto y = conv2d(x, ps.p(name + ".w"), ps.p(name + ".b"), stride, pad);
  y = batch_norm(y, ps.p(name + "/bn.g"), ps.p(name + "/bn.beta"),
                 ps.buf(name + "/bn.rm"), ps.buf(name + "/bn.rv"), training);
  return relu(y);
}

}  // namespace

template <typename S>
Tensor<S> residual_block(const Tensor<S>& x, ParamStore<S>& ps,
                         const std::string& prefix, bool training) {
  auto y = conv2d(x, ps.p(prefix + "/conv1.w"), ps.p(prefix + "/conv1.b"), 1, 1);
  y = batch_norm(y, ps.p(prefix + "/bn1.g"), ps.p(prefix + "/bn1.beta"),
                 ps.buf(prefix + "/bn1.rm"), ps.buf(prefix + "/bn1.rv"), training);
  y = relu(y);
  y = conv2d(y, ps.p(prefix + "/conv2.w"), ps.p(prefix + "/conv2.b"), 1, 1);
  y = batch_norm(y, ps.p(prefix + "/bn2.g"), ps.p(prefix + "/bn2.beta"),
                 ps.buf(prefix + "/bn2.rm"), ps.buf(prefix + "/bn2.rv"), training);
  Tensor<S> skip = x;
  if (ps.has(prefix + "/proj.w")) {
    skip = conv2d(x, ps.p(prefix + "/proj.w"), ps.p(prefix + "/proj.b"), 1, 0);
    skip = batch_norm(skip, ps.p(prefix + "/bnp.g"), ps.p(prefix + "/bnp.beta"),
                      ps.buf(prefix + "/bnp.rm"), ps.buf(prefix + "/bnp.rv"), training);
  }
  return relu(add(y, skip));
}

template <typename S>
void build_generator_params(ParamStore<S>& ps, const ModelConfig& cfg, Rng& rng) {
  const auto& c = cfg.channels;
  // encoder: stem halves once, each stage halves again -> H/4 .. H/32.
  // Downsampling convs are 4x4 stride-2 pad-1: the only kernel in the catalog
  // whose output size divides exactly when halving even inputs.
  add_conv(ps, rng, "enc/stem", c[0], 3, 4);
  add_bn(ps, "enc/stem/bn", c[0]);
  int prev = c[0];
  for (int i = 0; i < 4; ++i) {
    const std::string stage = "enc/s" + std::to_string(i + 1);
    add_conv(ps, rng, stage + "/down", c[static_cast<std::size_t>(i)], prev, 4);
    add_bn(ps, stage + "/down/bn", c[static_cast<std::size_t>(i)]);
    add_residual(ps, rng, stage + "/res", c[static_cast<std::size_t>(i)],
                 c[static_cast<std::size_t>(i)]);
    prev = c[static_cast<std::size_t>(i)];
  }
  // lateral 1x1 projections, stage i keeps its own width
  for (int i = 1; i <= 3; ++i)
    add_conv(ps, rng, "lat/" + std::to_string(i), c[static_cast<std::size_t>(i - 1)],
             c[static_cast<std::size_t>(i - 1)], 1);
  // gcam: q/k/v reduce to C/2, output projection restores C
  const int cq = c[3] / 2;
  add_conv(ps, rng, "gcam/q", cq, c[3], 1);
  add_conv(ps, rng, "gcam/k", cq, c[3], 1);
  add_conv(ps, rng, "gcam/v", cq, c[3], 1);
  add_conv(ps, rng, "gcam/o", c[3], cq, 1);
  // decoder: four residual DecBlks walking the ladder back down
  add_residual(ps, rng, "dec/b4", cfg.consensus_channels(), c[2]);
  add_residual(ps, rng, "dec/b3", c[2], c[1]);
  add_residual(ps, rng, "dec/b2", c[1], c[0]);
  add_residual(ps, rng, "dec/b1", c[0], c[0]);
  add_conv(ps, rng, "dec/head", 1, c[0], 1);
}

template <typename S>
void build_discriminator_params(ParamStore<S>& ps, Rng& rng) {
  const int widths[4] = {16, 32, 64, 128};
  int prev = 3;
  for (int i = 0; i < 4; ++i) {
    const std::string blk = "disc/b" + std::to_string(i + 1);
    add_conv(ps, rng, blk, widths[i], prev, 4);
    if (i > 0) add_bn(ps, blk + "/bn", widths[i]);  // first DiscBlk has no norm
    prev = widths[i];
  }
  ps.params["disc/head.w"] = fanin_uniform<S>({1, 128, 1, 1}, 128, rng);
  ps.params["disc/head.b"] = Tensor<S>::zeros({1});
}

template <typename S>
EncoderFeatures<S> encode(const Tensor<S>& images, ParamStore<S>& ps,
                          const ModelConfig& cfg, bool training) {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ShapeError("encode: need [B,3,H,W], got " + shape_str(images.shape()));
  }
  if (images.dim(2) % 32 != 0 || images.dim(3) % 32 != 0) {
    throw ShapeError("encode: spatial size " + std::to_string(images.dim(2)) + "x" +
                     std::to_string(images.dim(3)) + " not divisible by 32");
  }
  auto x = conv_bn_relu(images, ps, "enc/stem", 2, 1, training);
  EncoderFeatures<S> out;
  for (int i = 1; i <= 4; ++i) {
    const std::string stage = "enc/s" + std::to_string(i);
    x = conv_bn_relu(x, ps, stage + "/down", 2, 1, training);
    x = residual_block(x, ps, stage + "/res", training);
    if (i == 1) out.lat1 = x;
    if (i == 2) out.lat2 = x;
    if (i == 3) out.lat3 = x;
  }
  out.final_ = x;
  return out;
}

template <typename S>
Tensor<S> lateral_project(const Tensor<S>& f, int stage, ParamStore<S>& ps) {
  if (stage < 1 || stage > 3) throw ContractError("lateral_project: stage 1..3");
  const std::string name = "lat/" + std::to_string(stage);
  return conv2d(f, ps.p(name + ".w"), ps.p(name + ".b"), 1, 0);
}

template <typename S>
Tensor<S> decode(const Tensor<S>& consensus, const EncoderFeatures<S>& enc,
                 ParamStore<S>& ps, const ModelConfig& cfg, bool training) {
  auto upsample2 = [](const Tensor<S>& t) {
    return bilinear_resize(t, t.dim(2) * 2, t.dim(3) * 2);
  };
  auto lateral_add = [&](const Tensor<S>& up, const Tensor<S>& feat, int stage) {
    auto lat = lateral_project(feat, stage, ps);
    if (lat.shape() != up.shape()) {
      throw ShapeError("decode: lateral " + shape_str(lat.shape()) +
                       " vs upsampled " + shape_str(up.shape()));
    }
    return add(up, lat);
  };

  auto x = residual_block(consensus, ps, "dec/b4", training);
  x = lateral_add(upsample2(x), enc.lat3, 3);
  x = residual_block(x, ps, "dec/b3", training);
  x = lateral_add(upsample2(x), enc.lat2, 2);
  x = residual_block(x, ps, "dec/b2", training);
  x = lateral_add(upsample2(x), enc.lat1, 1);
  x = residual_block(x, ps, "dec/b1", training);
  x = conv2d(x, ps.p("dec/head.w"), ps.p("dec/head.b"), 1, 0);
  return bilinear_resize(x, x.dim(2) * 4, x.dim(3) * 4);
}

template <typename S>
std::vector<Tensor<S>> predict_maps(const Tensor<S>& logits,
                                    const std::vector<std::pair<int, int>>& orig_sizes) {
  if (logits.rank() != 4 || logits.dim(1) != 1) {
    throw ShapeError("predict_maps: need [B,1,H,W], got " + shape_str(logits.shape()));
  }
  if (static_cast<int>(orig_sizes.size()) != logits.dim(0)) {
    throw ContractError("predict_maps: need one size per batch element");
  }
  auto maps = clamp(sigmoid(logits), 1e-7, 1.0 - 1e-7);
  std::vector<Tensor<S>> out;
  out.reserve(orig_sizes.size());
  for (int i = 0; i < logits.dim(0); ++i) {
    auto one = slice(maps, 0, i, 1);
    const auto [h, w] = orig_sizes[static_cast<std::size_t>(i)];
    one = bilinear_resize(one, h, w);
    out.push_back(reshape(one, {h, w}));
  }
  return out;
}

#define MCCL_INSTANTIATE_MODEL(S)                                                      \
  template struct ParamStore<S>;                                                       \
  template Tensor<S> residual_block<S>(const Tensor<S>&, ParamStore<S>&,               \
                                       const std::string&, bool);                      \
  template void build_generator_params<S>(ParamStore<S>&, const ModelConfig&, Rng&);   \
  template void build_discriminator_params<S>(ParamStore<S>&, Rng&);                   \
  template EncoderFeatures<S> encode<S>(const Tensor<S>&, ParamStore<S>&,              \
                                        const ModelConfig&, bool);                     \
  template Tensor<S> lateral_project<S>(const Tensor<S>&, int, ParamStore<S>&);        \
  template Tensor<S> decode<S>(const Tensor<S>&, const EncoderFeatures<S>&,            \
                               ParamStore<S>&, const ModelConfig&, bool);              \
  template std::vector<Tensor<S>> predict_maps<S>(                                     \
      const Tensor<S>&, const std::vector<std::pair<int, int>>&);

MCCL_INSTANTIATE_MODEL(float)
MCCL_INSTANTIATE_MODEL(double)

#undef MCCL_INSTANTIATE_MODEL

}  // namespace mccl
