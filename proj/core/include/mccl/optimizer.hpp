#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mccl/model.hpp"
#include "mccl/tensor.hpp"

namespace mccl {

// AdamW: adaptive moments with bias correction and decoupled weight decay.
// Moments are kept in double. A step with any non-finite gradient is skipped
// entirely and counted.
template <typename S>
class AdamW {
 public:
  explicit AdamW(double weight_decay = 1e-2, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8)
      : wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore<S>& ps, double lr);

  int skipped_steps() const { return skipped_; }
  std::int64_t step_count() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> state_;
  double wd_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  int skipped_ = 0;
};

// Scales all gradients in the store so their global L2 norm is at most
// max_norm; returns the pre-clip norm.
template <typename S>
double clip_global_norm(ParamStore<S>& ps, double max_norm);

}  // namespace mccl
