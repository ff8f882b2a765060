#include "roa/params.hpp"

#include <cmath>

#include "roa/errors.hpp"

namespace roa {

template <Real T>
Tensor<T>& ParameterStore<T>::get_or_init(const std::string& name, const Shape& shape, Init init, bool trainable) {
  if (auto it = entries_.find(name); it != entries_.end()) {
    if (it->second.value.shape() != shape) {
      throw ShapeMismatch("parameter '" + name + "' has shape " + to_string(it->second.value.shape()) +
                          ", requested " + to_string(shape));
    }
    return it->second.value;
  }
  Tensor<T> value(shape);
  switch (init) {
    case Init::kZero:
      break;
    case Init::kOne:
      value.fill(T(1));
      break;
    case Init::kFanIn: {
      const double fan_in = static_cast<double>(numel(shape)) / static_cast<double>(shape.at(0));
      const double bound = 1.0 / std::sqrt(fan_in);
      for (auto& v : value.data()) v = static_cast<T>(rng_.uniform(-bound, bound));
      break;
    }
  }
  return entries_.emplace(name, Entry{std::move(value), trainable}).first->second.value;
}

template <Real T>
Tensor<T>& ParameterStore<T>::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second.value;
}

template <Real T>
const Tensor<T>& ParameterStore<T>::at(const std::string& name) const {
  return const_cast<ParameterStore*>(this)->at(name);
}

template <Real T>
Index ParameterStore<T>::count(bool trainable_only, std::string_view prefix) const {
  Index total = 0;
  for (const auto& [name, e] : entries_) {
    if (trainable_only && !e.trainable) continue;
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    total += e.value.numel();
  }
  return total;
}

template <Real T>
Scope<T>::Scope(Tape<T>& tape, ParameterStore<T>& store, NormMode mode, bool trainable)
    : tape_(&tape),
      store_(&store),
      mode_(mode),
      trainable_(trainable),
      bound_(std::make_shared<std::map<std::string, Var<T>>>()) {}

template <Real T>
Scope<T> Scope<T>::sub(std::string_view name) const {
  Scope out = *this;
  out.prefix_ = prefix_ + std::string(name) + ".";
  return out;
}

template <Real T>
Var<T> Scope<T>::param(std::string_view name, const Shape& shape, Init init) {
  const std::string full = prefix_ + std::string(name);
  if (auto it = bound_->find(full); it != bound_->end()) {
    if (it->second.shape() != shape) {
      throw ShapeMismatch("parameter '" + full + "' reused with shape " + to_string(shape));
    }
    return it->second;
  }
  const Tensor<T>& value = store_->get_or_init(full, shape, init, true);
  Var<T> v = trainable_ ? tape_->variable(value) : tape_->constant(value);
  bound_->emplace(full, v);
  return v;
}

template <Real T>
Tensor<T>& Scope<T>::buffer(std::string_view name, const Shape& shape, Init init) {
  return store_->get_or_init(prefix_ + std::string(name), shape, init, false);
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Scope<float>;
template class Scope<double>;

}  // namespace roa
