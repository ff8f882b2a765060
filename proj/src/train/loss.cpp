#include "roa/loss.hpp"

#include <cmath>

#include "roa/errors.hpp"

namespace roa {

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) || !std::isfinite(lambda2)) {
    throw InvalidArgument("loss weights must be finite and non-negative");
  }
}

LossReport total_loss(double l_det, double l_depth, double l_roa, const LossWeights& w) {
  if (!std::isfinite(l_det) || !std::isfinite(l_depth) || !std::isfinite(l_roa)) {
    throw NonFinite("loss component is not finite (det " + std::to_string(l_det) + ", depth " +
                    std::to_string(l_depth) + ", roa " + std::to_string(l_roa) + ")");
  }
  w.validate();
  return {l_det, l_depth, l_roa, l_det + w.lambda1 * l_depth + w.lambda2 * l_roa};
}

template <Real T>
Var<T> roa_loss(const Var<T>& pred, const Var<T>& label, Reduction reduction) {
  if (pred.shape() != label.shape()) {
    throw ShapeMismatch("roa_loss: prediction " + to_string(pred.shape()) + " vs label " + to_string(label.shape()));
  }
  return l1_loss(pred, label, reduction);
}

template <Real T>
double roa_loss(const Tensor<T>& pred, const Tensor<T>& label, Reduction reduction) {
  Tape<T> tape;
  return static_cast<double>(roa_loss(tape.constant(pred), tape.constant(label), reduction).value().item());
}

template Var<float> roa_loss(const Var<float>&, const Var<float>&, Reduction);
template Var<double> roa_loss(const Var<double>&, const Var<double>&, Reduction);
template double roa_loss(const Tensor<float>&, const Tensor<float>&, Reduction);
template double roa_loss(const Tensor<double>&, const Tensor<double>&, Reduction);

}  // namespace roa
