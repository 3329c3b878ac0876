#include "mccl/ail.hpp"

#include "mccl/error.hpp"
#include "mccl/ops.hpp"

namespace mccl {

template <typename S>
Tensor<S> mask_images(const Tensor<S>& source, const Tensor<S>& maps) {
  if (source.rank() != 4 || maps.rank() != 4 || source.dim(1) != 3 ||
      maps.dim(1) != 1 || source.dim(0) != maps.dim(0) ||
      source.dim(2) != maps.dim(2) || source.dim(3) != maps.dim(3)) {
    throw ShapeError("mask_images: source " + shape_str(source.shape()) +
                     " vs maps " + shape_str(maps.shape()));
  }
  auto broadcast = concat<S>({maps, maps, maps}, 1);
  return mul(source, broadcast);
}

template <typename S>
Tensor<S> discriminator_forward(const Tensor<S>& x, ParamStore<S>& ps, bool training) {
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw ShapeError("discriminator: need [B,3,H,W], got " + shape_str(x.shape()));
  }
  if (x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0) {
    throw ShapeError("discriminator: spatial size " + std::to_string(x.dim(2)) + "x" +
                     std::to_string(x.dim(3)) + " not divisible by 16");
  }
  auto y = x;
  for (int i = 1; i <= 4; ++i) {
    const std::string blk = "disc/b" + std::to_string(i);
    y = conv2d(y, ps.p(blk + ".w"), ps.p(blk + ".b"), 2, 1);
    if (i > 1) {
      y = batch_norm(y, ps.p(blk + "/bn.g"), ps.p(blk + "/bn.beta"),
                     ps.buf(blk + "/bn.rm"), ps.buf(blk + "/bn.rv"), training);
    }
    y = leaky_relu(y, 0.2);
  }
  auto pooled = global_avg_pool(y);  // [B, 128]
  auto logits = reshape(conv2d(reshape(pooled, {pooled.dim(0), pooled.dim(1), 1, 1}),
                               ps.p("disc/head.w"), ps.p("disc/head.b"), 1, 0),
                        {pooled.dim(0)});
  return clamp(sigmoid(logits), 1e-7, 1.0 - 1e-7);
}

template <typename S>
Tensor<S> adv_generator_loss(const Tensor<S>& pred_maps, const Tensor<S>& source,
                             ParamStore<S>& disc, bool training) {
  auto scores = discriminator_forward(mask_images(source, pred_maps), disc, training);
  return mul_scalar(mean(log_clamped(scores)), -1.0);
}

template <typename S>
Tensor<S> disc_loss(const Tensor<S>& pred_maps, const Tensor<S>& gt_maps,
                    const Tensor<S>& source, ParamStore<S>& disc, double lambda5,
                    bool training) {
  auto real = discriminator_forward(mask_images(source, gt_maps), disc, training);
  auto fake = discriminator_forward(mask_images(source, detach(pred_maps)), disc, training);
  auto real_term = mul_scalar(mean(log_clamped(real)), -1.0);
  auto one_minus_fake = add_scalar(mul_scalar(fake, -1.0), 1.0);
  auto fake_term = mul_scalar(mean(log_clamped(one_minus_fake)), -1.0);
  return mul_scalar(add(real_term, fake_term), lambda5 / 2.0);
}

#define MCCL_INSTANTIATE_AIL(S)                                                     \
  template Tensor<S> mask_images<S>(const Tensor<S>&, const Tensor<S>&);            \
  template Tensor<S> discriminator_forward<S>(const Tensor<S>&, ParamStore<S>&,     \
                                              bool);                                \
  template Tensor<S> adv_generator_loss<S>(const Tensor<S>&, const Tensor<S>&,      \
                                           ParamStore<S>&, bool);                   \
  template Tensor<S> disc_loss<S>(const Tensor<S>&, const Tensor<S>&,               \
                                  const Tensor<S>&, ParamStore<S>&, double, bool);

MCCL_INSTANTIATE_AIL(float)
MCCL_INSTANTIATE_AIL(double)

#undef MCCL_INSTANTIATE_AIL

}  // namespace mccl
