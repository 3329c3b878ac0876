#pragma once

#include "mccl/tensor.hpp"

namespace mccl {

// Loss weights of the generator objective (lambda1..4) and the discriminator
// objective (lambda5). Defaults are the published values.
struct LossWeights {
  double bce = 30.0;
  double iou = 0.5;
  double mcm = 3.0;
  double adv = 10.0;
  double disc = 3.0;
};

// mean over all pixels of -[Y log Yhat + (1-Y) log(1-Yhat)], pred clamped
// into [1e-7, 1-1e-7]
template <typename S>
Tensor<S> bce_loss(const Tensor<S>& pred, const Tensor<S>& gt);

// soft IoU: per image, intersection = sum(Y*Yhat), union = sum(Y+Yhat-Y*Yhat)
// + 1e-7; loss = 1 - batch mean
template <typename S>
Tensor<S> iou_loss(const Tensor<S>& pred, const Tensor<S>& gt);

// lambda1*bce + lambda2*iou + lambda3*mcm + lambda4*adv
template <typename S>
Tensor<S> total_generator_loss(const Tensor<S>& bce, const Tensor<S>& iou,
                               const Tensor<S>& mcm, const Tensor<S>& adv,
                               const LossWeights& w);

}  // namespace mccl
