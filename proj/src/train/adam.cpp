#include <cmath>

#include "roa/errors.hpp"
#include "roa/optim.hpp"

namespace roa {

template <Real T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, std::int64_t step,
                 const AdamOptions& o) {
  if (grad.shape() != param.shape() || m.shape() != param.shape() || v.shape() != param.shape()) {
    throw ShapeMismatch("adam: gradient " + to_string(grad.shape()) + " does not match parameter " +
                        to_string(param.shape()));
  }
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  for (Index i = 0; i < param.numel(); ++i) {
    const double g = grad[i];
    const double mi = o.beta1 * static_cast<double>(m[i]) + (1.0 - o.beta1) * g;
    const double vi = o.beta2 * static_cast<double>(v[i]) + (1.0 - o.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    param[i] = static_cast<T>(static_cast<double>(param[i]) - o.lr * (mi / c1) / (std::sqrt(vi / c2) + o.eps));
  }
}

template <Real T>
void optimizer_step(ParameterStore<T>& store, const std::map<std::string, Tensor<T>>& grads, AdamState<T>& state,
                    const AdamOptions& options) {
  for (const auto& [name, g] : grads) {
    auto it = store.entries().find(name);
    if (it == store.entries().end() || !it->second.trainable) {
      throw InvalidArgument("no trainable parameter named '" + name + "'");
    }
    if (g.shape() != it->second.value.shape()) {
      throw ShapeMismatch("gradient for '" + name + "' has shape " + to_string(g.shape()) + ", parameter has " +
                          to_string(it->second.value.shape()));
    }
  }
  ++state.step;
  for (const auto& [name, g] : grads) {
    Tensor<T>& p = store.at(name);
    auto& m = state.m.try_emplace(name, p.shape()).first->second;
    auto& v = state.v.try_emplace(name, p.shape()).first->second;
    adam_update(p, g, m, v, state.step, options);
  }
}

template void adam_update(Tensor<float>&, const Tensor<float>&, Tensor<float>&, Tensor<float>&, std::int64_t,
                          const AdamOptions&);
template void adam_update(Tensor<double>&, const Tensor<double>&, Tensor<double>&, Tensor<double>&, std::int64_t,
                          const AdamOptions&);
template void optimizer_step(ParameterStore<float>&, const std::map<std::string, Tensor<float>>&, AdamState<float>&,
                             const AdamOptions&);
template void optimizer_step(ParameterStore<double>&, const std::map<std::string, Tensor<double>>&,
                             AdamState<double>&, const AdamOptions&);

}  // namespace roa
