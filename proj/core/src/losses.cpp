#include "mccl/losses.hpp"

#include <cmath>

#include "mccl/error.hpp"
#include "mccl/ops.hpp"

namespace mccl {

template <typename S>
Tensor<S> bce_loss(const Tensor<S>& pred, const Tensor<S>& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("bce_loss: " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  auto p = clamp(pred, 1e-7, 1.0 - 1e-7);
  auto one_minus_p = add_scalar(mul_scalar(p, -1.0), 1.0);
  auto one_minus_gt = add_scalar(mul_scalar(gt, -1.0), 1.0);
  auto term = add(mul(gt, log_clamped(p)), mul(one_minus_gt, log_clamped(one_minus_p)));
  return mul_scalar(mean(term), -1.0);
}

template <typename S>
Tensor<S> iou_loss(const Tensor<S>& pred, const Tensor<S>& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("iou_loss: " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  const int batch = pred.dim(0);
  Tensor<S> acc;
  for (int i = 0; i < batch; ++i) {
    auto p = slice(pred, 0, i, 1);
    auto y = slice(gt, 0, i, 1);
    auto inter = sum(mul(y, p));
    auto uni = add_scalar(sub(add(sum(y), sum(p)), inter), 1e-7);
    auto iou = div(inter, uni);
    acc = acc.defined() ? add(acc, iou) : iou;
  }
  return add_scalar(mul_scalar(acc, -1.0 / batch), 1.0);
}

template <typename S>
Tensor<S> total_generator_loss(const Tensor<S>& bce, const Tensor<S>& iou,
                               const Tensor<S>& mcm, const Tensor<S>& adv,
                               const LossWeights& w) {
  auto check = [](const Tensor<S>& t, const char* name) {
    if (!t.defined() || t.numel() != 1) {
      throw ContractError(std::string("total loss: ") + name + " is not a scalar");
    }
    if (!std::isfinite(static_cast<double>(t.item()))) {
      throw NumericError(std::string("total loss: non-finite ") + name + " component");
    }
  };
  check(bce, "bce");
  check(iou, "iou");
  check(mcm, "mcm");
  check(adv, "adv");
  auto low = add(mul_scalar(bce, w.bce), mul_scalar(iou, w.iou));
  auto high = add(mul_scalar(mcm, w.mcm), mul_scalar(adv, w.adv));
  return add(low, high);
}

#define MCCL_INSTANTIATE_LOSSES(S)                                                   \
  template Tensor<S> bce_loss<S>(const Tensor<S>&, const Tensor<S>&);                \
  template Tensor<S> iou_loss<S>(const Tensor<S>&, const Tensor<S>&);                \
  template Tensor<S> total_generator_loss<S>(const Tensor<S>&, const Tensor<S>&,     \
                                             const Tensor<S>&, const Tensor<S>&,     \
                                             const LossWeights&);

MCCL_INSTANTIATE_LOSSES(float)
MCCL_INSTANTIATE_LOSSES(double)

#undef MCCL_INSTANTIATE_LOSSES

}  // namespace mccl
