#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "roa/params.hpp"

namespace roa {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <Real T>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, Tensor<T>> m, v;  // first and second moments by parameter name
};

/// One bias-corrected Adam update on a single tensor. m and v are updated in
/// place; `step` is the 1-based index of this update. Moment arithmetic runs
/// in double.
template <Real T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, std::int64_t step,
                 const AdamOptions& options);

/// Applies adam_update to every store entry named in `grads` and advances the
/// step counter once. Throws ShapeMismatch when a gradient does not match
/// its parameter, InvalidArgument for unknown or non-trainable names.
template <Real T>
void optimizer_step(ParameterStore<T>& store, const std::map<std::string, Tensor<T>>& grads, AdamState<T>& state,
                    const AdamOptions& options = {});

}  // namespace roa
