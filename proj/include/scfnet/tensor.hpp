#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scfnet/errors.hpp"

namespace scfnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

/// Dense row-major N-d array with an optional gradient.
///
/// A Tensor is a cheap handle: copies alias the same storage. Values produced
/// by ops are treated as immutable; only parameter updates (optimizer,
/// checkpoint restore, gradient checking) write through mutable_data().
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  const std::vector<T>& vec() const { return impl_->data; }
  T item() const;
  T at(std::size_t flat) const { return impl_->data.at(flat); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient values; zeros when nothing was accumulated.
  std::vector<T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Ordered record of differentiable operations.
///
/// Ops append a node whenever a tape is active on the current thread and one
/// of their inputs requires a gradient. Nodes are appended after their inputs
/// exist, so the list is already topologically sorted.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(std::span<const T> grad_out)>;

  struct Node {
    std::string_view op;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::shared_ptr<TensorImpl<T>> output;
    Backward backward;
  };

  void record(Node node) { nodes_.push_back(std::move(node)); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Tape receiving records on this thread, or nullptr.
  static Tape* active() { return active_slot(); }
  static Tape*& active_slot();

 private:
  std::vector<Node> nodes_;
};

/// Makes `tape` the recording target of the current thread for its lifetime.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::active_slot()) {
    Tape<T>::active_slot() = &tape;
  }
  ~TapeScope() { Tape<T>::active_slot() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Suspends recording on the current thread (inference, optimizer updates).
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape<T>::active()) { Tape<T>::active_slot() = nullptr; }
  ~NoGradScope() { Tape<T>::active_slot() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Reverse sweep over `tape` seeded with d(loss)/d(loss) = 1. Gradients
// accumulate into every requires_grad tensor on the path.
template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape);

namespace detail {

// Appends a node for `out` if recording is on and some input needs a gradient.
template <typename T>
void record_op(std::string_view op, std::initializer_list<const Tensor<T>*> inputs,
               Tensor<T>& out, typename Tape<T>::Backward backward);

template <typename T>
void record_op(std::string_view op, const std::vector<Tensor<T>>& inputs, Tensor<T>& out,
               typename Tape<T>::Backward backward);

// grad += g, allocating zeros first if needed. No-op for tensors without
// requires_grad.
template <typename T>
void accumulate_grad(TensorImpl<T>& impl, std::span<const T> g);

}  // namespace detail

}  // namespace scfnet
