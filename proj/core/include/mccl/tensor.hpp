#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mccl/error.hpp"

namespace mccl {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <typename S>
struct TensorData {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty unless requires_grad
  bool requires_grad = false;
};

}  // namespace detail

// Dense row-major tensor handle. Copies share storage; clone() deep-copies.
// Rank-0 tensors (empty shape, one element) act as scalars.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return full(std::move(shape), S(0)); }

  static Tensor full(Shape shape, S value) {
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData<S>>();
    t.d_->shape = std::move(shape);
    t.d_->data.assign(static_cast<std::size_t>(shape_numel(t.d_->shape)), value);
    return t;
  }

  static Tensor scalar(S value) { return full({}, value); }

  static Tensor from_data(Shape shape, std::vector<S> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
      throw ShapeError("from_data: " + shape_str(shape) + " needs " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData<S>>();
    t.d_->shape = std::move(shape);
    t.d_->data = std::move(values);
    return t;
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(d_->data.size()); }

  S* data() { return d_->data.data(); }
  const S* data() const { return d_->data.data(); }
  std::vector<S>& vec() { return d_->data; }
  const std::vector<S>& vec() const { return d_->data; }

  S item() const {
    if (numel() != 1) {
      throw ContractError("item(): tensor " + shape_str(shape()) +
                          " is not a scalar");
    }
    return d_->data[0];
  }

  // flat and multi-index access
  S& operator[](std::int64_t i) { return d_->data[static_cast<std::size_t>(i)]; }
  S operator[](std::int64_t i) const { return d_->data[static_cast<std::size_t>(i)]; }
  S& at(int i, int j) { return d_->data[static_cast<std::size_t>(i) * dim(1) + j]; }
  S at(int i, int j) const { return d_->data[static_cast<std::size_t>(i) * dim(1) + j]; }
  S& at(int b, int c, int y, int x) {
    return d_->data[((static_cast<std::size_t>(b) * dim(1) + c) * dim(2) + y) * dim(3) + x];
  }
  S at(int b, int c, int y, int x) const {
    return d_->data[((static_cast<std::size_t>(b) * dim(1) + c) * dim(2) + y) * dim(3) + x];
  }

  bool requires_grad() const { return d_ && d_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    d_->requires_grad = on;
    if (on) {
      d_->grad.assign(d_->data.size(), S(0));
    } else {
      d_->grad.clear();
    }
    return *this;
  }

  S* grad() { return d_->grad.empty() ? nullptr : d_->grad.data(); }
  const S* grad() const { return d_->grad.empty() ? nullptr : d_->grad.data(); }
  std::vector<S>& grad_vec() { return d_->grad; }
  const std::vector<S>& grad_vec() const { return d_->grad; }

  void zero_grad() {
    if (d_ && d_->requires_grad) d_->grad.assign(d_->data.size(), S(0));
  }

  // Deep copy of values; no gradient state, no tape history.
  Tensor clone() const {
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData<S>>();
    t.d_->shape = d_->shape;
    t.d_->data = d_->data;
    return t;
  }

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  std::shared_ptr<detail::TensorData<S>> d_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

// Reverse-mode tape. Constructing a Tape installs it as the active recorder
// for its scalar type on this thread; destruction restores the previous one.
// Ops append one backward closure per recorded operation together with the
// op's output tensor. backward() zeroes the grads of all recorded outputs
// (the intermediates), seeds d(loss)/d(loss) = 1 and replays the closures in
// reverse order, so each node contributes exactly once per call while leaf
// gradients accumulate across calls.
template <typename S>
class Tape {
 public:
  Tape() : prev_(active_ptr()) { active_ptr() = this; }
  ~Tape() { active_ptr() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_ptr(); }

  void record(Tensor<S> output, std::function<void()> fn) {
    nodes_.push_back(Node{std::move(output), std::move(fn)});
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Tensor<S> loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw ContractError("backward: loss must be scalar, got " +
                          (loss.defined() ? shape_str(loss.shape())
                                          : std::string("undefined")));
    }
    if (!loss.requires_grad()) {
      // nothing on the tape feeds this loss; no-op
      return;
    }
    for (auto& node : nodes_) node.output.zero_grad();
    loss.grad_vec()[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
  }

 private:
  struct Node {
    Tensor<S> output;
    std::function<void()> fn;
  };

  static Tape*& active_ptr() {
    thread_local Tape* active = nullptr;
    return active;
  }

  std::vector<Node> nodes_;
  Tape* prev_ = nullptr;
};

namespace detail {

// An op output participates in autograd when a tape is active and some input
// carries grad.
template <typename S>
inline bool grad_active(bool any_input_requires) {
  return any_input_requires && Tape<S>::active() != nullptr;
}

}  // namespace detail

}  // namespace mccl
