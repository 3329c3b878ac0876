#include "mccl/gradcheck.hpp"

#include <cmath>

#include "mccl/error.hpp"

namespace mccl {

template <typename S>
double grad_check(const std::function<Tensor<S>()>& loss_fn, Tensor<S> x, double h) {
  const bool had_grad = x.requires_grad();
  x.set_requires_grad(true);
  {
    Tape<S> tape;
    Tensor<S> loss = loss_fn();
    tape.backward(loss);
  }
  std::vector<S> analytic = x.grad_vec();
  x.set_requires_grad(false);

  double max_err = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const S saved = x[i];
    x[i] = static_cast<S>(static_cast<double>(saved) + h);
    const double fp = static_cast<double>(loss_fn().item());
    x[i] = static_cast<S>(static_cast<double>(saved) - h);
    const double fm = static_cast<double>(loss_fn().item());
    x[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: non-finite loss at coordinate " +
                         std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double err = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_err = std::max(max_err, err);
  }
  x.set_requires_grad(had_grad);
  return max_err;
}

template <typename S>
double grad_check(const std::function<Tensor<S>(const Tensor<S>&)>& f, Tensor<S> x,
                  double h) {
  return grad_check<S>([f, x]() { return f(x); }, x, h);
}

template double grad_check<float>(const std::function<Tensor<float>()>&, Tensor<float>,
                                  double);
template double grad_check<double>(const std::function<Tensor<double>()>&,
                                   Tensor<double>, double);
template double grad_check<float>(
    const std::function<Tensor<float>(const Tensor<float>&)>&, Tensor<float>, double);
template double grad_check<double>(
    const std::function<Tensor<double>(const Tensor<double>&)>&, Tensor<double>, double);

}  // namespace mccl
