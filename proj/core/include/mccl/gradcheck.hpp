#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mccl/tensor.hpp"

namespace mccl {

// Central-difference gradient verification.
//
// loss_fn must be a deterministic scalar function that reads x through its
// shared storage; x is perturbed coordinate by coordinate in place, so the
// same closure serves free-standing tensors and parameters embedded in a
// model. Returns max over coordinates of
//   |analytic - central| / max(|analytic|, |central|, 1e-8).
template <typename S>
double grad_check(const std::function<Tensor<S>()>& loss_fn, Tensor<S> x, double h);

// Convenience form for f(x) closures over a standalone input.
template <typename S>
double grad_check(const std::function<Tensor<S>(const Tensor<S>&)>& f, Tensor<S> x,
                  double h);

// One entry of the verification suite run by the `gradcheck` CLI command.
struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Checks every differentiable catalog op on several random shapes, each
// composite loss, and a micro-config full-model pass, all at 64-bit.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed);

}  // namespace mccl
