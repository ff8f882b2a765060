#include <memory>

#include "kernels.hpp"

namespace roa {

Index conv_out_extent(Index in, Index kernel, const ConvGeometry& geom) {
  if (geom.stride < 1 || geom.dilation < 1 || geom.padding < 0) {
    throw InvalidArgument("conv geometry needs stride >= 1, dilation >= 1, padding >= 0");
  }
  const Index span = in + 2 * geom.padding - geom.dilation * (kernel - 1) - 1;
  if (span < 0) {
    throw EmptyOutput("convolution output is empty (input " + std::to_string(in) + ", kernel " +
                      std::to_string(kernel) + ")");
  }
  return span / geom.stride + 1;
}

namespace {

using kernels::ConvDims;

template <Real T>
ConvDims check_conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, const ConvGeometry& geom) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeMismatch("conv2d expects NCHW input and OxIxKxK weight, got " + to_string(x.shape()) + " and " +
                        to_string(w.shape()));
  }
  if (w.dim(1) != x.dim(1)) {
    throw ShapeMismatch("conv2d channel mismatch: input has " + std::to_string(x.dim(1)) + ", weight expects " +
                        std::to_string(w.dim(1)));
  }
  if (w.dim(2) != w.dim(3)) throw ShapeMismatch("conv2d needs a square kernel, got " + to_string(w.shape()));
  if (bias && bias->numel() != w.dim(0)) {
    throw ShapeMismatch("conv2d bias has " + std::to_string(bias->numel()) + " entries for " +
                        std::to_string(w.dim(0)) + " output channels");
  }
  const Index k = w.dim(2);
  ConvDims d{x.dim(1), x.dim(2), x.dim(3), k, 0, 0, geom};
  d.out_height = conv_out_extent(d.height, k, geom);
  d.out_width = conv_out_extent(d.width, k, geom);
  return d;
}

template <Real T>
Tensor<T> init_output(Index batch, Index out_channels, const ConvDims& d, const Tensor<T>* bias) {
  Tensor<T> out({batch, out_channels, d.out_height, d.out_width});
  if (bias) {
    const Index plane = d.out_height * d.out_width;
    T* o = out.ptr();
    for (Index n = 0; n < batch; ++n) {
      for (Index c = 0; c < out_channels; ++c) std::fill_n(o + (n * out_channels + c) * plane, plane, (*bias)[c]);
    }
  }
  return out;
}

template <Real T>
void bias_grad(const Tensor<T>& g, Tensor<T>& db) {
  const Index batch = g.dim(0), channels = g.dim(1), plane = g.dim(2) * g.dim(3);
  for (Index n = 0; n < batch; ++n) {
    for (Index c = 0; c < channels; ++c) {
      const T* row = g.ptr() + (n * channels + c) * plane;
      T acc = T(0);
      for (Index p = 0; p < plane; ++p) acc += row[p];
      db[c] += acc;
    }
  }
}

// Builds the deformable column matrix of image n.
template <Real T>
void deform_im2col(const T* x, const T* off, const ConvDims& d, T* col) {
  const Index plane = d.out_height * d.out_width;
  const Index kk = d.kernel * d.kernel;
  for (Index c = 0; c < d.channels; ++c) {
    const T* xc = x + c * d.height * d.width;
    for (Index k = 0; k < kk; ++k) {
      const Index ky = k / d.kernel, kx = k % d.kernel;
      const T* dy = off + (2 * k) * plane;
      const T* dx = off + (2 * k + 1) * plane;
      T* row = col + (c * kk + k) * plane;
      for (Index oy = 0; oy < d.out_height; ++oy) {
        for (Index ox = 0; ox < d.out_width; ++ox) {
          const Index p = oy * d.out_width + ox;
          const T y = static_cast<T>(oy * d.geom.stride - d.geom.padding + ky * d.geom.dilation) + dy[p];
          const T xx = static_cast<T>(ox * d.geom.stride - d.geom.padding + kx * d.geom.dilation) + dx[p];
          row[p] = kernels::BilinearTap<T>(y, xx).sample(xc, d.height, d.width);
        }
      }
    }
  }
}

}  // namespace

template <Real T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& geom) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  const Tensor<T>* b = bias.valid() ? &bias.value() : nullptr;
  const ConvDims d = check_conv(x, w, b, geom);
  const Index batch = x.dim(0), out_channels = w.dim(0);
  const Index inner = d.channels * d.kernel * d.kernel;
  const Index plane = d.out_height * d.out_width;

  Tensor<T> out = init_output(batch, out_channels, d, b);
  std::vector<T> col(static_cast<std::size_t>(inner * plane));
  for (Index n = 0; n < batch; ++n) {
    kernels::im2col(x.ptr() + n * d.channels * d.height * d.width, d, col.data());
    kernels::gemm_accumulate(w.ptr(), col.data(), out.ptr() + n * out_channels * plane, out_channels, inner, plane);
  }

  return input.tape().record(
      std::move(out), {input, weight, bias}, [input, weight, bias, d](Tape<T>& tape, const Tensor<T>& g) {
        const Tensor<T>& x = input.value();
        const Tensor<T>& w = weight.value();
        const Index batch = x.dim(0), out_channels = w.dim(0);
        const Index inner = d.channels * d.kernel * d.kernel;
        const Index plane = d.out_height * d.out_width;
        const Index image = d.channels * d.height * d.width;
        Tensor<T>* dx = tape.grad_slot(input);
        Tensor<T>* dw = tape.grad_slot(weight);
        if (bias.valid()) {
          if (Tensor<T>* db = tape.grad_slot(bias)) bias_grad(g, *db);
        }
        std::vector<T> col(static_cast<std::size_t>(inner * plane));
        for (Index n = 0; n < batch; ++n) {
          const T* gn = g.ptr() + n * out_channels * plane;
          if (dw) {
            kernels::im2col(x.ptr() + n * image, d, col.data());
            kernels::gemm_grad_weight(gn, col.data(), dw->ptr(), out_channels, inner, plane);
          }
          if (dx) {
            kernels::gemm_grad_col(w.ptr(), gn, col.data(), out_channels, inner, plane);
            kernels::col2im(col.data(), d, dx->ptr() + n * image);
          }
        }
      });
}

template <Real T>
Var<T> deform_conv2d(const Var<T>& input, const Var<T>& offset, const Var<T>& weight, const Var<T>& bias,
                     const ConvGeometry& geom) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  const Tensor<T>& off = offset.value();
  const Tensor<T>* b = bias.valid() ? &bias.value() : nullptr;
  const ConvDims d = check_conv(x, w, b, geom);
  const Index batch = x.dim(0), out_channels = w.dim(0);
  const Index kk = d.kernel * d.kernel;
  const Shape want{batch, 2 * kk, d.out_height, d.out_width};
  if (off.shape() != want) {
    throw ShapeMismatch("deform_conv2d offset must be " + to_string(want) + ", got " + to_string(off.shape()));
  }
  const Index inner = d.channels * kk;
  const Index plane = d.out_height * d.out_width;
  const Index image = d.channels * d.height * d.width;

  Tensor<T> out = init_output(batch, out_channels, d, b);
  std::vector<T> col(static_cast<std::size_t>(inner * plane));
  std::uint64_t cells = 0;
  for (Index n = 0; n < batch; ++n) {
    const T* offn = off.ptr() + n * 2 * kk * plane;
    deform_im2col(x.ptr() + n * image, offn, d, col.data());
    kernels::gemm_accumulate(w.ptr(), col.data(), out.ptr() + n * out_channels * plane, out_channels, inner, plane);
    for (Index i = 0; i < 2 * kk * plane; ++i) {
      cells = kernels::mix64(cells, static_cast<std::uint64_t>(static_cast<Index>(std::floor(offn[i]))));
    }
  }
  input.tape().mix_branch(cells);

  return input.tape().record(
      std::move(out), {input, offset, weight, bias},
      [input, offset, weight, bias, d](Tape<T>& tape, const Tensor<T>& g) {
        const Tensor<T>& x = input.value();
        const Tensor<T>& w = weight.value();
        const Tensor<T>& off = offset.value();
        const Index batch = x.dim(0), out_channels = w.dim(0);
        const Index kk = d.kernel * d.kernel;
        const Index inner = d.channels * kk;
        const Index plane = d.out_height * d.out_width;
        const Index image = d.channels * d.height * d.width;
        const Index hw = d.height * d.width;
        Tensor<T>* dx = tape.grad_slot(input);
        Tensor<T>* dw = tape.grad_slot(weight);
        Tensor<T>* doff = tape.grad_slot(offset);
        if (bias.valid()) {
          if (Tensor<T>* db = tape.grad_slot(bias)) bias_grad(g, *db);
        }
        std::vector<T> col(static_cast<std::size_t>(inner * plane));
        for (Index n = 0; n < batch; ++n) {
          const T* gn = g.ptr() + n * out_channels * plane;
          const T* xn = x.ptr() + n * image;
          const T* offn = off.ptr() + n * 2 * kk * plane;
          if (dw) {
            deform_im2col(xn, offn, d, col.data());
            kernels::gemm_grad_weight(gn, col.data(), dw->ptr(), out_channels, inner, plane);
          }
          if (!dx && !doff) continue;
          kernels::gemm_grad_col(w.ptr(), gn, col.data(), out_channels, inner, plane);
          for (Index c = 0; c < d.channels; ++c) {
            const T* xc = xn + c * hw;
            for (Index k = 0; k < kk; ++k) {
              const Index ky = k / d.kernel, kx = k % d.kernel;
              const T* row = col.data() + (c * kk + k) * plane;
              for (Index oy = 0; oy < d.out_height; ++oy) {
                for (Index ox = 0; ox < d.out_width; ++ox) {
                  const Index p = oy * d.out_width + ox;
                  const T gv = row[p];
                  const T y = static_cast<T>(oy * d.geom.stride - d.geom.padding + ky * d.geom.dilation) +
                              offn[(2 * k) * plane + p];
                  const T xx = static_cast<T>(ox * d.geom.stride - d.geom.padding + kx * d.geom.dilation) +
                               offn[(2 * k + 1) * plane + p];
                  const kernels::BilinearTap<T> tap(y, xx);
                  if (dx) tap.scatter(dx->ptr() + n * image + c * hw, d.height, d.width, gv);
                  if (doff) {
                    T gy, gx;
                    tap.coord_grad(xc, d.height, d.width, gy, gx);
                    T* dn = doff->ptr() + n * 2 * kk * plane;
                    dn[(2 * k) * plane + p] += gv * gy;
                    dn[(2 * k + 1) * plane + p] += gv * gx;
                  }
                }
              }
            }
          }
        }
      });
}

template <Real T>
Var<T> bilinear_sample(const Var<T>& input, const Var<T>& points) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& pts = points.value();
  if (x.rank() != 4 || pts.rank() != 4 || pts.dim(3) != 2 || pts.dim(0) != x.dim(0)) {
    throw ShapeMismatch("bilinear_sample expects NCHW input and N x H' x W' x 2 points, got " +
                        to_string(x.shape()) + " and " + to_string(pts.shape()));
  }
  const Index batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index oh = pts.dim(1), ow = pts.dim(2), plane = oh * ow;
  Tensor<T> out({batch, channels, oh, ow});
  std::uint64_t cells = 0;
  for (Index n = 0; n < batch; ++n) {
    for (Index p = 0; p < plane; ++p) {
      const T* pt = pts.ptr() + (n * plane + p) * 2;
      const kernels::BilinearTap<T> tap(pt[0], pt[1]);
      cells = kernels::mix64(cells, tap.cell_bits());
      for (Index c = 0; c < channels; ++c) {
        out[(n * channels + c) * plane + p] = tap.sample(x.ptr() + (n * channels + c) * h * w, h, w);
      }
    }
  }
  input.tape().mix_branch(cells);

  return input.tape().record(std::move(out), {input, points}, [input, points](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& x = input.value();
    const Tensor<T>& pts = points.value();
    const Index batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Index plane = pts.dim(1) * pts.dim(2);
    Tensor<T>* dx = tape.grad_slot(input);
    Tensor<T>* dp = tape.grad_slot(points);
    for (Index n = 0; n < batch; ++n) {
      for (Index p = 0; p < plane; ++p) {
        const T* pt = pts.ptr() + (n * plane + p) * 2;
        const kernels::BilinearTap<T> tap(pt[0], pt[1]);
        for (Index c = 0; c < channels; ++c) {
          const Index base = (n * channels + c) * h * w;
          const T gv = g[(n * channels + c) * plane + p];
          if (dx) tap.scatter(dx->ptr() + base, h, w, gv);
          if (dp) {
            T gy, gx;
            tap.coord_grad(x.ptr() + base, h, w, gy, gx);
            (*dp)[(n * plane + p) * 2] += gv * gy;
            (*dp)[(n * plane + p) * 2 + 1] += gv * gx;
          }
        }
      }
    }
  });
}

template Var<float> conv2d(const Var<float>&, const Var<float>&, const Var<float>&, const ConvGeometry&);
template Var<double> conv2d(const Var<double>&, const Var<double>&, const Var<double>&, const ConvGeometry&);
template Var<float> deform_conv2d(const Var<float>&, const Var<float>&, const Var<float>&, const Var<float>&,
                                  const ConvGeometry&);
template Var<double> deform_conv2d(const Var<double>&, const Var<double>&, const Var<double>&, const Var<double>&,
                                   const ConvGeometry&);
template Var<float> bilinear_sample(const Var<float>&, const Var<float>&);
template Var<double> bilinear_sample(const Var<double>&, const Var<double>&);

}  // namespace roa
