#pragma once

#include "roa/ops.hpp"

namespace roa {

struct LossWeights {
  double lambda1 = 3.0;  // depth term
  double lambda2 = 1.0;  // ROA term

  void validate() const;
};

struct LossReport {
  double l_det = 0.0;
  double l_depth = 0.0;
  double l_roa = 0.0;
  double total = 0.0;
};

/// L = l_det + lambda1 * l_depth + lambda2 * l_roa. The detection and depth
/// terms come from outside (there is no detector here; callers pass 0).
/// Throws NonFinite if any component is NaN or infinite.
LossReport total_loss(double l_det, double l_depth, double l_roa, const LossWeights& w = {});

/// L1 between predicted and label maps of identical shape; mean reduction by
/// default.
template <Real T>
Var<T> roa_loss(const Var<T>& pred, const Var<T>& label, Reduction reduction = Reduction::kMean);

template <Real T>
double roa_loss(const Tensor<T>& pred, const Tensor<T>& label, Reduction reduction = Reduction::kMean);

}  // namespace roa
