#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mccl/rng.hpp"
#include "mccl/tensor.hpp"

namespace mccl {

// Name-indexed parameter set. `params` are trainable; `buffers` hold
// batch-norm running statistics and travel with checkpoints but receive no
// gradients. std::map keeps iteration (and thus serialization) order stable.
template <typename S>
struct ParamStore {
  std::map<std::string, Tensor<S>> params;
  std::map<std::string, Tensor<S>> buffers;

  Tensor<S>& p(const std::string& name);
  Tensor<S>& buf(const std::string& name);
  bool has(const std::string& name) const { return params.count(name) != 0; }

  void set_requires_grad(bool on);
  void zero_grads();
};

struct ModelConfig {
  // encoder channel ladder; stage i output has channels[i] at H / 2^(i+2)
  std::array<int, 4> channels{16, 32, 64, 128};

  int consensus_channels() const { return channels[3] * 2; }
};

// Stage features of the 4-stage encoder: lat1..lat3 feed the decoder's
// lateral connections, final_ feeds GCAM. Spatial sizes H/4 .. H/32.
template <typename S>
struct EncoderFeatures {
  Tensor<S> lat1, lat2, lat3, final_;
};

// Fan-in-scaled uniform init for conv / affine weights, zero biases,
// identity-like batch-norm. One Rng stream drives the whole build.
template <typename S>
void build_generator_params(ParamStore<S>& ps, const ModelConfig& cfg, Rng& rng);
template <typename S>
void build_discriminator_params(ParamStore<S>& ps, Rng& rng);

template <typename S>
EncoderFeatures<S> encode(const Tensor<S>& images, ParamStore<S>& ps,
                          const ModelConfig& cfg, bool training);

// stage in {1,2,3}; 1x1 projection, no activation
template <typename S>
Tensor<S> lateral_project(const Tensor<S>& f, int stage, ParamStore<S>& ps);

// consensus: [B, 2*C4, H/32, W/32]; returns logits [B,1,H,W]
template <typename S>
Tensor<S> decode(const Tensor<S>& consensus, const EncoderFeatures<S>& enc,
                 ParamStore<S>& ps, const ModelConfig& cfg, bool training);

// sigmoid + clamp, resized per element to its original size; rank-2 maps
template <typename S>
std::vector<Tensor<S>> predict_maps(const Tensor<S>& logits,
                                    const std::vector<std::pair<int, int>>& orig_sizes);

// shared building block: conv -> bn -> relu -> conv -> bn, projected skip
// when channel counts differ, relu after the add
template <typename S>
Tensor<S> residual_block(const Tensor<S>& x, ParamStore<S>& ps,
                         const std::string& prefix, bool training);

}  // namespace mccl
