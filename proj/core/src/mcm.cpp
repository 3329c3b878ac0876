#include "mccl/mcm.hpp"

#include <cmath>

#include "mccl/error.hpp"
#include "mccl/ops.hpp"

namespace mccl {

template <typename S>
ConsensusMemory<S>::ConsensusMemory(double beta, double alpha)
    : beta_(beta), alpha_(alpha) {
  if (beta < 0.0 || beta >= 1.0) {
    throw ContractError("ConsensusMemory: momentum factor must be in [0,1)");
  }
  if (alpha <= 0.0) {
    throw ContractError("ConsensusMemory: margin must be positive");
  }
}

template <typename S>
void ConsensusMemory<S>::update(const std::string& class_id, const Tensor<S>& vec_a,
                                const Tensor<S>& vec_b) {
  if (vec_a.numel() != vec_b.numel()) {
    throw ContractError("memory update: A/B dimensions differ for " + class_id);
  }
  for (std::int64_t i = 0; i < vec_a.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(vec_a[i])) ||
        !std::isfinite(static_cast<double>(vec_b[i]))) {
      throw NumericError("memory update: non-finite consensus vector for " + class_id);
    }
  }
  auto it = entries_.find(class_id);
  if (it == entries_.end()) {
    Entry e;
    e.a.assign(vec_a.data(), vec_a.data() + vec_a.numel());
    e.b.assign(vec_b.data(), vec_b.data() + vec_b.numel());
    entries_.emplace(class_id, std::move(e));
    return;
  }
  Entry& e = it->second;
  if (static_cast<std::int64_t>(e.a.size()) != vec_a.numel()) {
    throw ContractError("memory update: dimension " + std::to_string(vec_a.numel()) +
                        " mismatches stored " + std::to_string(e.a.size()) +
                        " for " + class_id);
  }
  for (std::size_t i = 0; i < e.a.size(); ++i) {
    e.a[i] = static_cast<S>(beta_ * e.a[i] + (1.0 - beta_) * vec_a[static_cast<std::int64_t>(i)]);
    e.b[i] = static_cast<S>(beta_ * e.b[i] + (1.0 - beta_) * vec_b[static_cast<std::int64_t>(i)]);
  }
}

template <typename S>
Tensor<S> ConsensusMemory<S>::stored_a(const std::string& class_id) const {
  auto it = entries_.find(class_id);
  if (it == entries_.end()) throw ContractError("memory: unknown class " + class_id);
  return Tensor<S>::from_data({static_cast<int>(it->second.a.size())}, it->second.a);
}

template <typename S>
Tensor<S> ConsensusMemory<S>::stored_b(const std::string& class_id) const {
  auto it = entries_.find(class_id);
  if (it == entries_.end()) throw ContractError("memory: unknown class " + class_id);
  return Tensor<S>::from_data({static_cast<int>(it->second.b.size())}, it->second.b);
}

template <typename S>
std::vector<std::string> ConsensusMemory<S>::class_ids() const {
  std::vector<std::string> ids;
  ids.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) ids.push_back(id);
  return ids;
}

template <typename S>
Tensor<S> triplet_loss(const Tensor<S>& c1_a, const Tensor<S>& c1_b,
                       const Tensor<S>& c2_b, double alpha, bool clamp_hinge) {
  if (c1_a.numel() != c1_b.numel() || c1_a.numel() != c2_b.numel()) {
    throw ShapeError("triplet_loss: vector dimensions differ");
  }
  auto pos = l2_norm(sub(c1_a, c1_b));
  auto neg = l2_norm(sub(c1_a, c2_b));
  auto out = add_scalar(sub(pos, neg), alpha);
  return clamp_hinge ? relu(out) : out;
}

template <typename S>
Tensor<S> mcm_loss(const std::vector<std::string>& batch_classes,
                   const ConsensusMemory<S>& mem,
                   const std::map<std::string, std::pair<Tensor<S>, Tensor<S>>>& live,
                   bool clamp_hinge) {
  const int n = static_cast<int>(batch_classes.size());
  if (n == 0) throw ContractError("mcm_loss: empty batch");
  Tensor<S> total;
  for (const auto& ci : batch_classes) {
    auto it = live.find(ci);
    if (it == live.end()) throw ContractError("mcm_loss: no live vectors for " + ci);
    const auto& [anchor, positive] = it->second;
    for (const auto& cj : batch_classes) {
      auto negative = mem.stored_b(cj);  // constant
      auto term = triplet_loss(anchor, positive, negative, mem.alpha(), clamp_hinge);
      total = total.defined() ? add(total, term) : term;
    }
  }
  return mul_scalar(total, 1.0 / (static_cast<double>(n) * n));
}

#define MCCL_INSTANTIATE_MCM(S)                                                        \
  template class ConsensusMemory<S>;                                                   \
  template Tensor<S> triplet_loss<S>(const Tensor<S>&, const Tensor<S>&,               \
                                     const Tensor<S>&, double, bool);                  \
  template Tensor<S> mcm_loss<S>(                                                      \
      const std::vector<std::string>&, const ConsensusMemory<S>&,                      \
      const std::map<std::string, std::pair<Tensor<S>, Tensor<S>>>&, bool);

MCCL_INSTANTIATE_MCM(float)
MCCL_INSTANTIATE_MCM(double)

#undef MCCL_INSTANTIATE_MCM

}  // namespace mccl
