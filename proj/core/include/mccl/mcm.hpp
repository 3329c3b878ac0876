#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mccl/tensor.hpp"

namespace mccl {

// Class-keyed momentum memory of paired consensus vectors. Stored values are
// constants for gradient purposes: updates copy data out of the incoming
// tensors and reads hand back grad-free tensors.
template <typename S>
class ConsensusMemory {
 public:
  explicit ConsensusMemory(double beta = 0.1, double alpha = 0.1);

  double beta() const { return beta_; }
  double alpha() const { return alpha_; }

  // C^t = beta * C^(t-1) + (1 - beta) * incoming, per slot; unseen classes
  // initialize both slots by direct copy.
  void update(const std::string& class_id, const Tensor<S>& vec_a,
              const Tensor<S>& vec_b);

  bool has(const std::string& class_id) const { return entries_.count(class_id) != 0; }
  std::size_t size() const { return entries_.size(); }

  Tensor<S> stored_a(const std::string& class_id) const;
  Tensor<S> stored_b(const std::string& class_id) const;
  std::vector<std::string> class_ids() const;

 private:
  struct Entry {
    std::vector<S> a, b;
  };
  std::map<std::string, Entry> entries_;
  double beta_;
  double alpha_;
};

// || c1_a - c1_b ||_2 - || c1_a - c2_b ||_2 + alpha, exactly as printed;
// clamp_hinge switches on the conventional max(0, .) for experiments.
template <typename S>
Tensor<S> triplet_loss(const Tensor<S>& c1_a, const Tensor<S>& c1_b,
                       const Tensor<S>& c2_b, double alpha,
                       bool clamp_hinge = false);

// Group-pairwise sum over the N batch classes, normalized by N^2. Anchors and
// positives are the live (gradient-carrying) vectors; the negative of each
// pair is read from memory as a constant. i = j terms are included.
template <typename S>
Tensor<S> mcm_loss(const std::vector<std::string>& batch_classes,
                   const ConsensusMemory<S>& mem,
                   const std::map<std::string, std::pair<Tensor<S>, Tensor<S>>>& live,
                   bool clamp_hinge = false);

}  // namespace mccl
