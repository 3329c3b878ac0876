#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mccl/data.hpp"
#include "mccl/losses.hpp"
#include "mccl/mcm.hpp"
#include "mccl/model.hpp"
#include "mccl/tensor.hpp"

namespace mccl {

struct TrainConfig {
  int image_size = 64;  // divisible by 32
  int n_groups = 2;     // N groups per batch
  int group_cap = 16;   // desk-scale cap on S (48 in the published regime)
  int epochs = 200;
  double lr = 1e-4;
  int lr_drop_epochs_from_end = 20;
  double lr_drop_factor = 10.0;
  double beta = 0.1;   // memory momentum factor
  double alpha = 0.1;  // triplet margin
  LossWeights weights;
  std::uint64_t seed = 0;
  bool enable_mcm = true;
  bool enable_ail = true;
  bool enable_gcam = true;
  bool clamp_triplet = false;
  bool augment_enabled = true;
  double weight_decay = 1e-2;
  double clip_norm = 5.0;
  bool verbose = false;
  ModelConfig model;
  AugmentConfig augment;
};

struct EpochStats {
  double bce = 0, iou = 0, mcm = 0, adv = 0, disc = 0, total = 0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  int skipped_steps = 0;
};

// One generator pass over a multi-group batch: joint encode, per-group GCAM,
// decode over the concatenated consensus. images holds the groups back to
// back, per_group images each; perms supplies one shuffle per group.
template <typename S>
struct ForwardResult {
  Tensor<S> logits;  // [B,1,H,W]
  Tensor<S> pred;    // sigmoid, clamped into (0,1)
  std::map<std::string, std::pair<Tensor<S>, Tensor<S>>> live_vecs;
};

template <typename S>
ForwardResult<S> generator_forward(const Tensor<S>& images,
                                   const std::vector<std::string>& class_ids,
                                   int per_group, ParamStore<S>& gen,
                                   const ModelConfig& mc, bool enable_gcam,
                                   const std::vector<std::vector<int>>& perms,
                                   bool training);

// Full training run. Writes the checkpoint and a per-epoch TSV log (paths may
// be empty to skip either). Deterministic: identical config and seed give a
// byte-identical checkpoint.
TrainResult train(const TrainConfig& cfg, const std::string& data_root,
                  const std::string& gt_root, const std::string& checkpoint_path,
                  const std::string& log_path);

// Loads generator tensors only (mcm/ and disc/ entries are ignored), runs
// each group independently and writes 8-bit grayscale maps mirroring the
// input layout.
void infer(const std::string& checkpoint_path, const std::string& data_root,
           const std::string& out_dir);

}  // namespace mccl
