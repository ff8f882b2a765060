#include "kernels.hpp"

namespace roa {

namespace {

template <Real T>
void require_nchw(const Var<T>& x, const char* op) {
  if (x.shape().size() != 4) throw ShapeMismatch(std::string(op) + " expects NCHW input, got " + to_string(x.shape()));
}

// Source taps of a half-pixel-centered linear resize along one axis.
template <Real T>
struct ResizeAxis {
  std::vector<Index> lo, hi;
  std::vector<T> wlo, whi;

  ResizeAxis(Index in, Index factor) {
    const Index out = in * factor;
    lo.resize(out), hi.resize(out), wlo.resize(out), whi.resize(out);
    for (Index i = 0; i < out; ++i) {
      T src = (static_cast<T>(i) + T(0.5)) / static_cast<T>(factor) - T(0.5);
      if (src < T(0)) src = T(0);
      const Index i0 = std::min(static_cast<Index>(src), in - 1);
      const Index i1 = i0 < in - 1 ? i0 + 1 : i0;
      const T frac = src - static_cast<T>(i0);
      lo[i] = i0, hi[i] = i1, wlo[i] = T(1) - frac, whi[i] = frac;
    }
  }
};

}  // namespace

template <Real T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_nchw(x, "global_avg_pool");
  const Shape& s = x.shape();
  const Index nc = s[0] * s[1], plane = s[2] * s[3];
  Tensor<T> out({s[0], s[1], 1, 1});
  const T inv = T(1) / static_cast<T>(plane);
  for (Index i = 0; i < nc; ++i) {
    T acc = T(0);
    for (Index p = 0; p < plane; ++p) acc += x.value()[i * plane + p];
    out[i] = acc * inv;
  }
  return x.tape().record(std::move(out), {x}, [x, plane, inv](Tape<T>& tape, const Tensor<T>& g) {
    Tensor<T>* dx = tape.grad_slot(x);
    for (Index i = 0; i < g.numel(); ++i) {
      const T v = g[i] * inv;
      for (Index p = 0; p < plane; ++p) (*dx)[i * plane + p] += v;
    }
  });
}

template <Real T>
Var<T> avg_downsample(const Var<T>& x, Index stride) {
  require_nchw(x, "avg_downsample");
  const Shape& s = x.shape();
  if (stride < 1 || s[2] % stride != 0 || s[3] % stride != 0) {
    throw IndivisibleExtent("avg_downsample: stride " + std::to_string(stride) + " does not divide " +
                            to_string(s));
  }
  if (stride == 1) return scale(x, T(1));
  const Index h = s[2], w = s[3], oh = h / stride, ow = w / stride, nc = s[0] * s[1];
  const T inv = T(1) / static_cast<T>(stride * stride);
  Tensor<T> out({s[0], s[1], oh, ow});
  for (Index i = 0; i < nc; ++i) {
    const T* src = x.value().ptr() + i * h * w;
    T* dst = out.ptr() + i * oh * ow;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        T acc = T(0);
        for (Index dy = 0; dy < stride; ++dy) {
          for (Index dx = 0; dx < stride; ++dx) acc += src[(oy * stride + dy) * w + ox * stride + dx];
        }
        dst[oy * ow + ox] = acc * inv;
      }
    }
  }
  return x.tape().record(std::move(out), {x}, [x, stride, inv](Tape<T>& tape, const Tensor<T>& g) {
    Tensor<T>* dx = tape.grad_slot(x);
    const Shape& s = x.shape();
    const Index h = s[2], w = s[3], oh = h / stride, ow = w / stride;
    for (Index i = 0; i < s[0] * s[1]; ++i) {
      T* dst = dx->ptr() + i * h * w;
      const T* src = g.ptr() + i * oh * ow;
      for (Index y = 0; y < h; ++y) {
        for (Index xx = 0; xx < w; ++xx) dst[y * w + xx] += src[(y / stride) * ow + xx / stride] * inv;
      }
    }
  });
}

template <Real T>
Var<T> bilinear_upsample(const Var<T>& x, Index factor) {
  require_nchw(x, "bilinear_upsample");
  if (factor < 1) throw InvalidArgument("bilinear_upsample factor must be >= 1");
  if (factor == 1) return scale(x, T(1));
  const Shape& s = x.shape();
  const Index h = s[2], w = s[3], oh = h * factor, ow = w * factor;
  const ResizeAxis<T> ry(h, factor), rx(w, factor);
  Tensor<T> out({s[0], s[1], oh, ow});
  for (Index i = 0; i < s[0] * s[1]; ++i) {
    const T* src = x.value().ptr() + i * h * w;
    T* dst = out.ptr() + i * oh * ow;
    for (Index oy = 0; oy < oh; ++oy) {
      const T* r0 = src + ry.lo[oy] * w;
      const T* r1 = src + ry.hi[oy] * w;
      for (Index ox = 0; ox < ow; ++ox) {
        const Index c0 = rx.lo[ox], c1 = rx.hi[ox];
        dst[oy * ow + ox] = ry.wlo[oy] * (rx.wlo[ox] * r0[c0] + rx.whi[ox] * r0[c1]) +
                            ry.whi[oy] * (rx.wlo[ox] * r1[c0] + rx.whi[ox] * r1[c1]);
      }
    }
  }
  return x.tape().record(std::move(out), {x}, [x, factor](Tape<T>& tape, const Tensor<T>& g) {
    Tensor<T>* dx = tape.grad_slot(x);
    const Shape& s = x.shape();
    const Index h = s[2], w = s[3], oh = h * factor, ow = w * factor;
    const ResizeAxis<T> ry(h, factor), rx(w, factor);
    for (Index i = 0; i < s[0] * s[1]; ++i) {
      T* dst = dx->ptr() + i * h * w;
      const T* src = g.ptr() + i * oh * ow;
      for (Index oy = 0; oy < oh; ++oy) {
        for (Index ox = 0; ox < ow; ++ox) {
          const T gv = src[oy * ow + ox];
          dst[ry.lo[oy] * w + rx.lo[ox]] += gv * ry.wlo[oy] * rx.wlo[ox];
          dst[ry.lo[oy] * w + rx.hi[ox]] += gv * ry.wlo[oy] * rx.whi[ox];
          dst[ry.hi[oy] * w + rx.lo[ox]] += gv * ry.whi[oy] * rx.wlo[ox];
          dst[ry.hi[oy] * w + rx.hi[ox]] += gv * ry.whi[oy] * rx.whi[ox];
        }
      }
    }
  });
}

template <Real T>
Var<T> pool_and_resize(ResizeKind kind, const Var<T>& x, Index factor) {
  switch (kind) {
    case ResizeKind::kGlobalAvgPool:
      return global_avg_pool(x);
    case ResizeKind::kAvgDownsample:
      return avg_downsample(x, factor);
    case ResizeKind::kBilinearUpsample:
      return bilinear_upsample(x, factor);
  }
  throw InvalidArgument("unknown resize kind");
}

template <Real T>
Var<T> fully_connected(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Tensor<T>& in = x.value();
  const Tensor<T>& w = weight.value();
  if (in.rank() != 2 || w.rank() != 2 || in.dim(1) != w.dim(1)) {
    throw ShapeMismatch("fully_connected: input " + to_string(in.shape()) + " vs weight " + to_string(w.shape()));
  }
  const Index rows = in.dim(0), cin = in.dim(1), cout = w.dim(0);
  if (bias.valid() && bias.value().numel() != cout) {
    throw ShapeMismatch("fully_connected: bias has " + std::to_string(bias.value().numel()) + " entries for " +
                        std::to_string(cout) + " outputs");
  }
  Tensor<T> out({rows, cout});
  for (Index n = 0; n < rows; ++n) {
    for (Index d = 0; d < cout; ++d) {
      T acc = bias.valid() ? bias.value()[d] : T(0);
      for (Index c = 0; c < cin; ++c) acc += in[n * cin + c] * w[d * cin + c];
      out[n * cout + d] = acc;
    }
  }
  return x.tape().record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& in = x.value();
    const Tensor<T>& w = weight.value();
    const Index rows = in.dim(0), cin = in.dim(1), cout = w.dim(0);
    Tensor<T>* dx = tape.grad_slot(x);
    Tensor<T>* dw = tape.grad_slot(weight);
    Tensor<T>* db = bias.valid() ? tape.grad_slot(bias) : nullptr;
    for (Index n = 0; n < rows; ++n) {
      for (Index d = 0; d < cout; ++d) {
        const T gv = g[n * cout + d];
        if (db) (*db)[d] += gv;
        for (Index c = 0; c < cin; ++c) {
          if (dx) (*dx)[n * cin + c] += gv * w[d * cin + c];
          if (dw) (*dw)[d * cin + c] += gv * in[n * cin + c];
        }
      }
    }
  });
}

template <Real T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, const BatchNormOptions& options) {
  require_nchw(x, "batch_norm");
  const Shape& s = x.shape();
  const Index batch = s[0], channels = s[1], plane = s[2] * s[3];
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma.value(), &beta.value(), &running_mean, &running_var}) {
    if (p->numel() != channels) {
      throw ShapeMismatch("batch_norm parameter of length " + std::to_string(p->numel()) + " for " +
                          std::to_string(channels) + " channels");
    }
  }
  if (options.mode == NormMode::kIdentity) return scale(x, T(1));

  const T eps = static_cast<T>(options.eps);
  const Tensor<T>& in = x.value();
  const Index count = batch * plane;
  Tensor<T> mu({channels}), inv_std({channels});
  for (Index c = 0; c < channels; ++c) {
    T m, v;
    if (options.mode == NormMode::kTrain) {
      T acc = T(0);
      for (Index n = 0; n < batch; ++n) {
        for (Index p = 0; p < plane; ++p) acc += in[(n * channels + c) * plane + p];
      }
      m = acc / static_cast<T>(count);
      T sq = T(0);
      for (Index n = 0; n < batch; ++n) {
        for (Index p = 0; p < plane; ++p) {
          const T d = in[(n * channels + c) * plane + p] - m;
          sq += d * d;
        }
      }
      v = sq / static_cast<T>(count);
      const T mom = static_cast<T>(options.momentum);
      const T unbiased = count > 1 ? sq / static_cast<T>(count - 1) : v;
      running_mean[c] = (T(1) - mom) * running_mean[c] + mom * m;
      running_var[c] = (T(1) - mom) * running_var[c] + mom * unbiased;
    } else {
      m = running_mean[c];
      v = running_var[c];
    }
    mu[c] = m;
    inv_std[c] = T(1) / std::sqrt(v + eps);
  }

  Tensor<T> out(s);
  for (Index n = 0; n < batch; ++n) {
    for (Index c = 0; c < channels; ++c) {
      const T a = gamma.value()[c] * inv_std[c];
      const T b = beta.value()[c];
      for (Index p = 0; p < plane; ++p) {
        const Index i = (n * channels + c) * plane + p;
        out[i] = (in[i] - mu[c]) * a + b;
      }
    }
  }
  const bool train = options.mode == NormMode::kTrain;
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, mu, inv_std, train](Tape<T>& tape, const Tensor<T>& g) {
        const Tensor<T>& in = x.value();
        const Shape& s = in.shape();
        const Index batch = s[0], channels = s[1], plane = s[2] * s[3];
        const T count = static_cast<T>(batch * plane);
        Tensor<T>* dx = tape.grad_slot(x);
        Tensor<T>* dg = tape.grad_slot(gamma);
        Tensor<T>* db = tape.grad_slot(beta);
        for (Index c = 0; c < channels; ++c) {
          T sum_g = T(0), sum_gx = T(0);
          for (Index n = 0; n < batch; ++n) {
            for (Index p = 0; p < plane; ++p) {
              const Index i = (n * channels + c) * plane + p;
              sum_g += g[i];
              sum_gx += g[i] * (in[i] - mu[c]) * inv_std[c];
            }
          }
          if (dg) (*dg)[c] += sum_gx;
          if (db) (*db)[c] += sum_g;
          if (!dx) continue;
          const T a = gamma.value()[c] * inv_std[c];
          for (Index n = 0; n < batch; ++n) {
            for (Index p = 0; p < plane; ++p) {
              const Index i = (n * channels + c) * plane + p;
              if (train) {
                const T xhat = (in[i] - mu[c]) * inv_std[c];
                (*dx)[i] += a * (g[i] - sum_g / count - xhat * sum_gx / count);
              } else {
                (*dx)[i] += a * g[i];
              }
            }
          }
        }
      });
}

#define ROA_INSTANTIATE(T)                                                                               \
  template Var<T> global_avg_pool(const Var<T>&);                                                        \
  template Var<T> avg_downsample(const Var<T>&, Index);                                                  \
  template Var<T> bilinear_upsample(const Var<T>&, Index);                                               \
  template Var<T> pool_and_resize(ResizeKind, const Var<T>&, Index);                                     \
  template Var<T> fully_connected(const Var<T>&, const Var<T>&, const Var<T>&);                          \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, \
                             const BatchNormOptions&);

ROA_INSTANTIATE(float)
ROA_INSTANTIATE(double)

}  // namespace roa
