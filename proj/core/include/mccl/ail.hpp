#pragma once

#include "mccl/model.hpp"
#include "mccl/tensor.hpp"

namespace mccl {

// Pixel-wise product of source images with a single-channel map, the map
// broadcast over the 3 color channels. Differentiable w.r.t. both inputs.
template <typename S>
Tensor<S> mask_images(const Tensor<S>& source, const Tensor<S>& maps);

// Four stride-2 4x4 DiscBlks (16/32/64/128 channels, no norm in the first),
// leaky-relu 0.2, then global average pool -> affine -> sigmoid. Returns one
// score per image, clamped strictly inside (0,1).
template <typename S>
Tensor<S> discriminator_forward(const Tensor<S>& x, ParamStore<S>& ps, bool training);

// Non-saturating generator objective: BCE of D(source * pred) against 1.
template <typename S>
Tensor<S> adv_generator_loss(const Tensor<S>& pred_maps, const Tensor<S>& source,
                             ParamStore<S>& disc, bool training);

// lambda5 * [BCE(D(source*gt), 1) + BCE(D(source*detach(pred)), 0)] / 2
template <typename S>
Tensor<S> disc_loss(const Tensor<S>& pred_maps, const Tensor<S>& gt_maps,
                    const Tensor<S>& source, ParamStore<S>& disc, double lambda5,
                    bool training);

}  // namespace mccl
