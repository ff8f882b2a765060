#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

#include "roa/tensor.hpp"

namespace roa {

template <Real T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
template <Real T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Tensor<T>& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Wengert list. Every differentiable op computes its value eagerly and
/// appends a node carrying the rule that maps the output gradient onto its
/// inputs. backward() replays the nodes in reverse insertion order.
template <Real T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> variable(Tensor<T> value);

  // Records an op output. The node requires grad iff any input does; when
  // none does the backward rule is dropped.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward);
  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward);

  const Tensor<T>& value(const Var<T>& v) const { return node(v).value; }
  const Tensor<T>& grad(const Var<T>& v) const;
  bool requires_grad(const Var<T>& v) const { return node(v).requires_grad; }

  // Gradient buffer of v, zero-initialized on first use. Null when v does not
  // require grad, so backward rules can skip work.
  Tensor<T>* grad_slot(const Var<T>& v);
  void accumulate(const Var<T>& v, const Tensor<T>& g);

  // Seeds d(root)/d(root) = 1 and runs reverse accumulation. root must hold a
  // single element.
  void backward(const Var<T>& root);

  std::size_t size() const { return nodes_.size(); }

  // Piecewise ops (relu, floor in bilinear sampling, |.|) mix their branch
  // decisions into this hash. Two evaluations with equal signatures took the
  // same smooth piece everywhere.
  void mix_branch(std::uint64_t bits) { signature_ = (signature_ ^ bits) * 0x100000001b3ULL + 0x9e3779b97f4a7c15ULL; }
  std::uint64_t branch_signature() const { return signature_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(const Var<T>& v) const;
  Node& node(const Var<T>& v);

  std::deque<Node> nodes_;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

extern template class Var<float>;
extern template class Var<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace roa
