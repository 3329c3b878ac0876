#include "mccl/optimizer.hpp"

#include <cmath>

namespace mccl {

template <typename S>
void AdamW<S>::step(ParamStore<S>& ps, double lr) {
  for (auto& [name, p] : ps.params) {
    if (!p.requires_grad()) continue;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      if (!std::isfinite(static_cast<double>(p.grad()[i]))) {
        ++skipped_;
        return;
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : ps.params) {
    if (!p.requires_grad()) continue;
    auto& mom = state_[name];
    if (mom.m.empty()) {
      mom.m.assign(static_cast<std::size_t>(p.numel()), 0.0);
      mom.v.assign(static_cast<std::size_t>(p.numel()), 0.0);
    }
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double g = p.grad()[i];
      double& m = mom.m[static_cast<std::size_t>(i)];
      double& v = mom.v[static_cast<std::size_t>(i)];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g * g;
      const double update = (m / bc1) / (std::sqrt(v / bc2) + eps_) + wd_ * p[i];
      p[i] = static_cast<S>(p[i] - lr * update);
    }
  }
}

template <typename S>
double clip_global_norm(ParamStore<S>& ps, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : ps.params) {
    if (!p.requires_grad()) continue;
    for (std::int64_t i = 0; i < p.numel(); ++i) {
      const double g = p.grad()[i];
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& [name, p] : ps.params) {
      if (!p.requires_grad()) continue;
      for (std::int64_t i = 0; i < p.numel(); ++i)
        p.grad_vec()[static_cast<std::size_t>(i)] =
            static_cast<S>(p.grad()[i] * scale);
    }
  }
  return norm;
}

template class AdamW<float>;
template class AdamW<double>;
template double clip_global_norm<float>(ParamStore<float>&, double);
template double clip_global_norm<double>(ParamStore<double>&, double);

}  // namespace mccl
