#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mccl/model.hpp"
#include "mccl/tensor.hpp"

namespace mccl {

// One group's encoder output, images stacked along axis 0.
template <typename S>
struct GroupFeature {
  std::string class_id;
  Tensor<S> feat;  // [S, C, H, W]
};

template <typename S>
struct GroupConsensus {
  std::string class_id;
  Tensor<S> feat_out;  // [S, 2C, H, W], original image order
  Tensor<S> vec_a;     // [2C] pooled over the A-half images
  Tensor<S> vec_b;     // [2C] pooled over the B-half images
  std::vector<int> half_a, half_b;  // original image indices per half
};

// seeded permutation of 0..s-1 used by split_shuffle
std::vector<int> make_split_perm(int s, std::uint64_t seed);

// Even split after a seeded shuffle: first half -> A, second half -> B.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_shuffle(const Tensor<S>& feat,
                                              const std::vector<int>& perm);
template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_shuffle(const Tensor<S>& feat,
                                              std::uint64_t seed);

// Cross-image non-local block over the concatenated halves: softmax affinity
// of query/key dot products across all S*H*W positions, applied to the value
// feature, re-projected and added residually.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> nonlocal_consensus(const Tensor<S>& a,
                                                   const Tensor<S>& b,
                                                   ParamStore<S>& ps);

// Depth-wise correlation of the original feature with the pooled consensus
// kernel, concatenated with the consensus feature: [S,C,H,W] -> [S,2C,H,W].
template <typename S>
Tensor<S> depthwise_fuse(const Tensor<S>& orig, const Tensor<S>& cons);

template <typename S>
GroupConsensus<S> gcam_forward(const GroupFeature<S>& g, ParamStore<S>& ps,
                               const std::vector<int>& perm);
template <typename S>
GroupConsensus<S> gcam_forward(const GroupFeature<S>& g, ParamStore<S>& ps,
                               std::uint64_t seed);

}  // namespace mccl
