#pragma once

#include <vector>

#include "roa/autodiff.hpp"

namespace roa {

struct ConvGeometry {
  Index stride = 1;
  Index padding = 0;
  Index dilation = 1;
};

// (in + 2*padding - dilation*(kernel-1) - 1) / stride + 1; throws EmptyOutput
// when that is below one.
Index conv_out_extent(Index in, Index kernel, const ConvGeometry& geom);

// ---------------------------------------------------------------------------
// Convolution family. All take NCHW input and O x C x K x K weights. bias is
// optional (pass a default-constructed Var) and has shape [O].

/// Cross-correlation with zero padding. For every output element the sum
/// starts from the bias and adds products in (channel, ky, kx) order, so the
/// result is reproducible bit-for-bit against a direct loop with that order.
template <Real T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& geom);

/// Deformable convolution (v1, no modulation). offset is N x 2KK x H' x W';
/// channel 2k holds the row shift and 2k+1 the column shift of tap
/// k = ky*K + kx. With all offsets zero this is exactly conv2d.
template <Real T>
Var<T> deform_conv2d(const Var<T>& input, const Var<T>& offset, const Var<T>& weight, const Var<T>& bias,
                     const ConvGeometry& geom);

/// Samples input at fractional (y, x) positions. points is N x H' x W' x 2;
/// result is N x C x H' x W'. Pixels outside the image read as zero.
/// Differentiable in both the image and the coordinates.
template <Real T>
Var<T> bilinear_sample(const Var<T>& input, const Var<T>& points);

// ---------------------------------------------------------------------------
// Pointwise. Binary ops accept b with the rank of a and every extent either
// equal to a's or 1 (e.g. N x 1 x H x W against N x C x H x W).

template <Real T>
Var<T> relu(const Var<T>& a);
template <Real T>
Var<T> sigmoid(const Var<T>& a);
template <Real T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <Real T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <Real T>
Var<T> scale(const Var<T>& a, T factor);
template <Real T>
Var<T> add_scalar(const Var<T>& a, T offset);

enum class ElementwiseKind { kRelu, kSigmoid, kAdd, kMul, kScale };

// Dispatching form; unary kinds ignore b, kScale multiplies by `factor`.
template <Real T>
Var<T> elementwise(ElementwiseKind kind, const Var<T>& a, const Var<T>& b = {}, T factor = T(1));

// ---------------------------------------------------------------------------
// Pooling and resampling (NCHW).

template <Real T>
Var<T> global_avg_pool(const Var<T>& x);
/// Block mean over stride x stride windows; IndivisibleExtent if H or W is not
/// a multiple of stride.
template <Real T>
Var<T> avg_downsample(const Var<T>& x, Index stride);
/// Bilinear enlargement by an integer factor, half-pixel centers
/// (align_corners = false), edge-clamped.
template <Real T>
Var<T> bilinear_upsample(const Var<T>& x, Index factor);

enum class ResizeKind { kGlobalAvgPool, kAvgDownsample, kBilinearUpsample };

template <Real T>
Var<T> pool_and_resize(ResizeKind kind, const Var<T>& x, Index factor = 1);

// ---------------------------------------------------------------------------

/// x: N x C, weight: D x C, bias: [D] (optional) -> N x D.
template <Real T>
Var<T> fully_connected(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

enum class NormMode { kTrain, kEval, kIdentity };

struct BatchNormOptions {
  NormMode mode = NormMode::kTrain;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalization over N, H, W. Train mode normalizes with the
/// biased batch variance and folds the batch statistics (unbiased variance)
/// into the running buffers. Identity mode returns x untouched.
template <Real T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, const BatchNormOptions& options);

// ---------------------------------------------------------------------------
// Structural ops and reductions.

template <Real T>
Var<T> reshape(const Var<T>& x, Shape shape);
template <Real T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);
template <Real T>
Var<T> expand(const Var<T>& x, const Shape& shape);
template <Real T>
Var<T> sum(const Var<T>& x);
template <Real T>
Var<T> mean(const Var<T>& x);

enum class Reduction { kMean, kSum };

/// Sum or mean of |pred - label|; differentiable in both operands.
template <Real T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& label, Reduction reduction = Reduction::kMean);

}  // namespace roa
