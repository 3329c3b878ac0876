#pragma once

#include <vector>

#include "mccl/tensor.hpp"

namespace mccl {

// Operation catalog. Every op is recorded on the active Tape when an input
// requires grad. Reductions, matmul and conv accumulate in 64-bit regardless
// of the storage scalar.

// elementwise (same shape; scalar broadcast only via *_scalar)
template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> add_scalar(const Tensor<S>& a, double c);
template <typename S> Tensor<S> mul_scalar(const Tensor<S>& a, double c);

// activations and pointwise maps
template <typename S> Tensor<S> relu(const Tensor<S>& x);
template <typename S> Tensor<S> leaky_relu(const Tensor<S>& x, double slope = 0.2);
template <typename S> Tensor<S> sigmoid(const Tensor<S>& x);
// log with the input clamped at 1e-7 from below
template <typename S> Tensor<S> log_clamped(const Tensor<S>& x);
template <typename S> Tensor<S> clamp(const Tensor<S>& x, double lo, double hi);

// structure
template <typename S> Tensor<S> reshape(const Tensor<S>& x, Shape shape);
template <typename S> Tensor<S> transpose2d(const Tensor<S>& x);
template <typename S> Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis);
template <typename S> Tensor<S> slice(const Tensor<S>& x, int axis, int start, int len);
template <typename S> std::vector<Tensor<S>> split(const Tensor<S>& x, int axis, int parts);
// reorder along axis 0: out[i] = x[perm[i]]
template <typename S> Tensor<S> permute_batch(const Tensor<S>& x, const std::vector<int>& perm);
// [B,C,H,W] -> [B*H*W, C] and back; position-major flattening for attention
template <typename S> Tensor<S> flatten_positions(const Tensor<S>& x);
template <typename S> Tensor<S> unflatten_positions(const Tensor<S>& x, int b, int h, int w);

// linear algebra / convolution
template <typename S> Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);
// cross-correlation; bias optional (pass undefined Tensor for none)
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 int stride, int pad);
// per-channel 1x1 correlation: out[b,c] = k[c] * x[b,c]; k has numel C
template <typename S> Tensor<S> depthwise_conv2d(const Tensor<S>& x, const Tensor<S>& k);

// normalization / pooling / sampling
template <typename S> Tensor<S> softmax(const Tensor<S>& x, int axis);
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, bool training,
                     double momentum = 0.1, double eps = 1e-5);
template <typename S> Tensor<S> global_avg_pool(const Tensor<S>& x);  // [B,C,H,W] -> [B,C]
template <typename S> Tensor<S> mean_axis0(const Tensor<S>& x);       // [R,C] -> [C]
// align_corners=false bilinear sampling
template <typename S> Tensor<S> bilinear_resize(const Tensor<S>& x, int out_h, int out_w);

// reductions to rank-0 scalars
template <typename S> Tensor<S> sum(const Tensor<S>& x);
template <typename S> Tensor<S> mean(const Tensor<S>& x);
template <typename S> Tensor<S> l2_norm(const Tensor<S>& x);

// value copy that cuts the tape (gradients never flow through)
template <typename S> Tensor<S> detach(const Tensor<S>& x);

}  // namespace mccl
