#include "roa/autodiff.hpp"

namespace roa {

template <Real T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(*this);
}

template <Real T>
const Tensor<T>& Var<T>::grad() const {
  return tape_->grad(*this);
}

template <Real T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(*this);
}

template <Real T>
const typename Tape<T>::Node& Tape<T>::node(const Var<T>& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw InvalidArgument("variable does not belong to this tape");
  return nodes_[v.id_];
}

template <Real T>
typename Tape<T>::Node& Tape<T>::node(const Var<T>& v) {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw InvalidArgument("variable does not belong to this tape");
  return nodes_[v.id_];
}

template <Real T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <Real T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, true, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <Real T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward) {
  bool needs_grad = false;
  for (const auto& in : inputs) {
    if (in.valid() && node(in).requires_grad) needs_grad = true;
  }
  nodes_.push_back(Node{std::move(value), {}, false, needs_grad, needs_grad ? std::move(backward) : BackwardFn{}});
  return Var<T>(this, nodes_.size() - 1);
}

template <Real T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
}

template <Real T>
const Tensor<T>& Tape<T>::grad(const Var<T>& v) const {
  const Node& n = node(v);
  if (!n.has_grad) throw InvalidArgument("gradient not available; run backward() with a dependent root first");
  return n.grad;
}

template <Real T>
Tensor<T>* Tape<T>::grad_slot(const Var<T>& v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape());
    n.has_grad = true;
  }
  return &n.grad;
}

template <Real T>
void Tape<T>::accumulate(const Var<T>& v, const Tensor<T>& g) {
  Tensor<T>* slot = grad_slot(v);
  if (!slot) return;
  if (slot->shape() != g.shape()) {
    throw ShapeMismatch("gradient shape " + to_string(g.shape()) + " does not match value shape " +
                        to_string(slot->shape()));
  }
  T* dst = slot->ptr();
  const T* src = g.ptr();
  for (Index i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

template <Real T>
void Tape<T>::backward(const Var<T>& root) {
  Node& r = node(root);
  if (r.value.numel() != 1) throw ShapeMismatch("backward() needs a single-element root, got " + to_string(r.value.shape()));
  if (!r.requires_grad) return;
  grad_slot(root)->fill(T(1));
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad || !n.backward) continue;
    // The rule may grow other nodes' grads but never this node's, and deque
    // push_back is not used during backward, so the reference stays valid.
    n.backward(*this, n.grad);
  }
}

template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace roa
