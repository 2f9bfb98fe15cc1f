#include "scfnet/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace scfnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (impl_->grad.empty()) return std::vector<T>(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
Tape<T>*& Tape<T>::active_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ArgumentError("backward() needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  const auto& nodes = tape.nodes();
  auto it = std::find_if(nodes.rbegin(), nodes.rend(),
                         [&](const auto& n) { return n.output == loss.impl(); });
  if (it == nodes.rend()) {
    throw ArgumentError("backward(): loss was not produced on this tape");
  }
  detail::accumulate_grad<T>(*loss.impl(), std::vector<T>{T(1)});
  for (; it != nodes.rend(); ++it) {
    const auto& out = *it->output;
    if (out.grad.empty()) continue;
    it->backward(out.grad);
  }
}

namespace detail {

template <typename T>
void accumulate_grad(TensorImpl<T>& impl, std::span<const T> g) {
  if (!impl.requires_grad) return;
  if (impl.grad.empty()) {
    impl.grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) impl.grad[i] += g[i];
}

template <typename T>
void record_op(std::string_view op, std::initializer_list<const Tensor<T>*> inputs,
               Tensor<T>& out, typename Tape<T>::Backward backward) {
  auto* tape = Tape<T>::active();
  if (tape == nullptr) return;
  bool needed = false;
  for (const auto* t : inputs) needed = needed || t->requires_grad();
  if (!needed) return;
  out.set_requires_grad(true);
  typename Tape<T>::Node node{op, {}, out.impl(), std::move(backward)};
  for (const auto* t : inputs) node.inputs.push_back(t->impl());
  tape->record(std::move(node));
}

template <typename T>
void record_op(std::string_view op, const std::vector<Tensor<T>>& inputs, Tensor<T>& out,
               typename Tape<T>::Backward backward) {
  auto* tape = Tape<T>::active();
  if (tape == nullptr) return;
  bool needed = false;
  for (const auto& t : inputs) needed = needed || t.requires_grad();
  if (!needed) return;
  out.set_requires_grad(true);
  typename Tape<T>::Node node{op, {}, out.impl(), std::move(backward)};
  for (const auto& t : inputs) node.inputs.push_back(t.impl());
  tape->record(std::move(node));
}

}  // namespace detail

#define SCFNET_INSTANTIATE(T)                                                               \
  template class Tensor<T>;                                                                 \
  template class Tape<T>;                                                                   \
  template void backward<T>(const Tensor<T>&, Tape<T>&);                                    \
  template void detail::accumulate_grad<T>(TensorImpl<T>&, std::span<const T>);             \
  template void detail::record_op<T>(std::string_view, std::initializer_list<const Tensor<T>*>, \
                                     Tensor<T>&, typename Tape<T>::Backward);               \
  template void detail::record_op<T>(std::string_view, const std::vector<Tensor<T>>&,       \
                                     Tensor<T>&, typename Tape<T>::Backward);

SCFNET_INSTANTIATE(float)
SCFNET_INSTANTIATE(double)

}  // namespace scfnet
