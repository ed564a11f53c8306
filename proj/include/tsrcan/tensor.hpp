#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A BasicTensor is a cheap handle onto shared storage. Every differentiable op
// that sees an input with requires_grad() records a Node carrying a backward
// rule; backward() gathers the nodes reachable from a scalar loss into a Tape
// ordered by recording sequence and replays it in reverse.
//
// The scalar type is a template parameter so that gradient checks can run a
// double-precision shadow of the float model.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tsrcan/errors.hpp"

namespace tsr {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorImpl;

template <typename T>
struct Node {
  using BackwardFn = std::function<void(const std::vector<T>& out, std::span<const T> grad_out,
                                        std::vector<std::vector<T>*>& grad_in)>;

  std::uint64_t seq = 0;
  std::string op;
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::weak_ptr<TensorImpl<T>> output;
  // grad_in[i] is null when inputs[i] does not require a gradient; otherwise a
  // zero-initialised buffer of the input's size to accumulate into.
  BackwardFn backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;
};

// Thread-local switch consulted when ops decide whether to record.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

std::uint64_t next_node_seq();

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() : impl_(std::make_shared<TensorImpl<T>>()) { impl_->shape = {0}; }

  explicit BasicTensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<TensorImpl<T>>()) {
    impl_->data.assign(tsr::numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  BasicTensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<TensorImpl<T>>()) {
    if (tsr::numel(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_str(shape) + " needs " +
                           std::to_string(tsr::numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T(0)); }
  static BasicTensor full(Shape shape, T v) { return BasicTensor(std::move(shape), v); }
  static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, v); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  std::vector<T>& values() { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }

  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  // NCHW / CHW / HW element access; the index count must match ndim().
  T& at(std::initializer_list<std::size_t> idx) { return impl_->data[offset(idx)]; }
  T at(std::initializer_list<std::size_t> idx) const { return impl_->data[offset(idx)]; }

  T item() const {
    if (numel() != 1) throw UsageError("item(): tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }
  BasicTensor grad_tensor() const {
    if (!has_grad()) return zeros(shape());
    return BasicTensor(shape(), impl_->grad);
  }
  void zero_grad() {
    if (impl_->requires_grad) impl_->grad.assign(numel(), T(0));
    else impl_->grad.clear();
  }

  const std::shared_ptr<Node<T>>& node() const { return impl_->node; }
  bool is_leaf() const { return impl_->node == nullptr; }

  // Same values, no history, independent storage.
  BasicTensor detach() const { return BasicTensor(shape(), impl_->data); }
  BasicTensor clone() const { return detach(); }

  // Reinterpret the storage with another shape of equal size (no history).
  BasicTensor reshaped(Shape s) const { return BasicTensor(std::move(s), impl_->data); }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape(), std::vector<U>(impl_->data.begin(), impl_->data.end()));
  }

  bool same_storage(const BasicTensor& o) const { return impl_ == o.impl_; }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

  // Builds the output of a recorded op. The node is attached only if grad mode
  // is on and some input requires a gradient.
  static BasicTensor make_result(Shape shape, std::vector<T> values, std::string op,
                                 std::vector<BasicTensor> inputs,
                                 typename Node<T>::BackwardFn backward);

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != impl_->shape.size()) {
      throw DimensionError("at(): expected " + std::to_string(impl_->shape.size()) + " indices");
    }
    std::size_t off = 0;
    std::size_t d = 0;
    for (std::size_t i : idx) {
      if (i >= impl_->shape[d]) throw DimensionError("at(): index out of range");
      off = off * impl_->shape[d] + i;
      ++d;
    }
    return off;
  }

  std::shared_ptr<TensorImpl<T>> impl_;
};

template <typename T>
BasicTensor<T> BasicTensor<T>::make_result(Shape shape, std::vector<T> values, std::string op,
                                           std::vector<BasicTensor> inputs,
                                           typename Node<T>::BackwardFn backward) {
  BasicTensor out(std::move(shape), std::move(values));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;

  auto node = std::make_shared<Node<T>>();
  node->seq = next_node_seq();
  node->op = std::move(op);
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.impl());
  node->output = out.impl();
  node->backward = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->node = std::move(node);
  return out;
}

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// The recorded operations reachable from a root, in recording order. Replaying
// it back to front visits every op exactly once after all of its consumers.
template <typename T>
struct Tape {
  std::vector<std::shared_ptr<Node<T>>> ops;

  static Tape collect(const BasicTensor<T>& root);
};

// Accumulates d(loss)/d(leaf) into every reachable leaf with requires_grad.
// Repeated calls add to existing gradients.
template <typename T>
void backward(const BasicTensor<T>& loss);

}  // namespace tsr
