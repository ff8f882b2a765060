#include <memory>

#include "kernels.hpp"

namespace roa {

namespace kernels {

bool broadcastable(const Shape& full, const Shape& part) {
  if (full.size() != part.size()) return false;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (part[i] != full[i] && part[i] != 1) return false;
  }
  return true;
}

std::vector<Index> broadcast_map(const Shape& full, const Shape& part) {
  const std::size_t rank = full.size();
  std::vector<Index> part_stride(rank, 0);
  Index s = 1;
  for (std::size_t i = rank; i-- > 0;) {
    part_stride[i] = part[i] == 1 ? 0 : s;
    s *= part[i];
  }
  std::vector<Index> map(static_cast<std::size_t>(numel(full)));
  std::vector<Index> idx(rank, 0);
  Index offset = 0;
  for (auto& m : map) {
    m = offset;
    for (std::size_t i = rank; i-- > 0;) {
      offset += part_stride[i];
      if (++idx[i] < full[i]) break;
      offset -= part_stride[i] * full[i];
      idx[i] = 0;
    }
  }
  return map;
}

}  // namespace kernels

namespace {

template <Real T>
void require_broadcast(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!kernels::broadcastable(a.shape(), b.shape())) {
    throw ShapeMismatch(std::string(op) + ": cannot broadcast " + to_string(b.shape()) + " onto " +
                        to_string(a.shape()));
  }
}

// Sums a full-shape gradient down to the broadcast operand's shape.
template <Real T>
void reduce_into(const Tensor<T>& g, const Shape& part, Tensor<T>& dst) {
  if (g.shape() == part) {
    for (Index i = 0; i < g.numel(); ++i) dst[i] += g[i];
    return;
  }
  const auto map = kernels::broadcast_map(g.shape(), part);
  for (Index i = 0; i < g.numel(); ++i) dst[map[static_cast<std::size_t>(i)]] += g[i];
}

}  // namespace

template <Real T>
Var<T> relu(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  std::uint64_t bits = 0;
  for (Index i = 0; i < x.numel(); ++i) {
    const bool on = x[i] > T(0);
    out[i] = on ? x[i] : T(0);
    bits = kernels::mix64(bits, static_cast<std::uint64_t>(on) * static_cast<std::uint64_t>(i + 1));
  }
  a.tape().mix_branch(bits);
  return a.tape().record(std::move(out), {a}, [a](Tape<T>& tape, const Tensor<T>& g) {
    Tensor<T>* da = tape.grad_slot(a);
    const Tensor<T>& x = a.value();
    for (Index i = 0; i < x.numel(); ++i) {
      if (x[i] > T(0)) (*da)[i] += g[i];
    }
  });
}

template <Real T>
Var<T> sigmoid(const Var<T>& a) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  for (Index i = 0; i < x.numel(); ++i) out[i] = T(1) / (T(1) + std::exp(-x[i]));
  auto saved = std::make_shared<Tensor<T>>(out);
  return a.tape().record(std::move(out), {a}, [a, saved](Tape<T>& tape, const Tensor<T>& g) {
    Tensor<T>* da = tape.grad_slot(a);
    const Tensor<T>& s = *saved;
    for (Index i = 0; i < s.numel(); ++i) (*da)[i] += g[i] * s[i] * (T(1) - s[i]);
  });
}

template <Real T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_broadcast(a, b, "add");
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  Tensor<T> out(x.shape());
  if (x.shape() == y.shape()) {
    for (Index i = 0; i < x.numel(); ++i) out[i] = x[i] + y[i];
  } else {
    const auto map = kernels::broadcast_map(x.shape(), y.shape());
    for (Index i = 0; i < x.numel(); ++i) out[i] = x[i] + y[map[static_cast<std::size_t>(i)]];
  }
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    if (Tensor<T>* da = tape.grad_slot(a)) reduce_into(g, a.shape(), *da);
    if (Tensor<T>* db = tape.grad_slot(b)) reduce_into(g, b.shape(), *db);
  });
}

template <Real T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_broadcast(a, b, "mul");
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  Tensor<T> out(x.shape());
  const bool same = x.shape() == y.shape();
  const auto map = same ? std::vector<Index>{} : kernels::broadcast_map(x.shape(), y.shape());
  auto bi = [&map, same](Index i) { return same ? i : map[static_cast<std::size_t>(i)]; };
  for (Index i = 0; i < x.numel(); ++i) out[i] = x[i] * y[bi(i)];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& tape, const Tensor<T>& g) {
    const Tensor<T>& x = a.value();
    const Tensor<T>& y = b.value();
    const bool same = x.shape() == y.shape();
    const auto map = same ? std::vector<Index>{} : kernels::broadcast_map(x.shape(), y.shape());
    auto bi = [&map, same](Index i) { return same ? i : map[static_cast<std::size_t>(i)]; };
    if (Tensor<T>* da = tape.grad_slot(a)) {
      for (Index i = 0; i < x.numel(); ++i) (*da)[i] += g[i] * y[bi(i)];
    }
    if (Tensor<T>* db = tape.grad_slot(b)) {
      for (Index i = 0; i < x.numel(); ++i) (*db)[bi(i)] += g[i] * x[i];
    }
  });
}

template <Real T>
Var<T> scale(const Var<T>& a, T factor) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  for (Index i = 0; i < x.numel(); ++i) out[i] = x[i] * factor;
  return a.tape().record(std::move(out), {a}, [a, factor](Tape<T>& tape, const Tensor<T>& g) {
    Tensor<T>* da = tape.grad_slot(a);
    for (Index i = 0; i < g.numel(); ++i) (*da)[i] += g[i] * factor;
  });
}

template <Real T>
Var<T> add_scalar(const Var<T>& a, T offset) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  for (Index i = 0; i < x.numel(); ++i) out[i] = x[i] + offset;
  return a.tape().record(std::move(out), {a}, [a](Tape<T>& tape, const Tensor<T>& g) { tape.accumulate(a, g); });
}

template <Real T>
Var<T> elementwise(ElementwiseKind kind, const Var<T>& a, const Var<T>& b, T factor) {
  switch (kind) {
    case ElementwiseKind::kRelu:
      return relu(a);
    case ElementwiseKind::kSigmoid:
      return sigmoid(a);
    case ElementwiseKind::kAdd:
      return add(a, b);
    case ElementwiseKind::kMul:
      return mul(a, b);
    case ElementwiseKind::kScale:
      return scale(a, factor);
  }
  throw InvalidArgument("unknown elementwise kind");
}

template <Real T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& tape, const Tensor<T>& g) {
    tape.accumulate(x, g.reshaped(x.shape()));
  });
}

template <Real T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels needs at least one input");
  const Shape& first = parts.front().shape();
  if (first.size() != 4) throw ShapeMismatch("concat_channels expects NCHW inputs");
  Index channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeMismatch("concat_channels: " + to_string(s) + " incompatible with " + to_string(first));
    }
    channels += s[1];
  }
  const Index batch = first[0], plane = first[2] * first[3];
  Tensor<T> out({batch, channels, first[2], first[3]});
  for (Index n = 0; n < batch; ++n) {
    Index c0 = 0;
    for (const auto& p : parts) {
      const Index cp = p.shape()[1];
      std::copy_n(p.value().ptr() + n * cp * plane, cp * plane, out.ptr() + (n * channels + c0) * plane);
      c0 += cp;
    }
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape<T>& tape, const Tensor<T>& g) {
    const Index batch = g.dim(0), channels = g.dim(1), plane = g.dim(2) * g.dim(3);
    Index c0 = 0;
    for (const auto& p : parts) {
      const Index cp = p.shape()[1];
      if (Tensor<T>* dp = tape.grad_slot(p)) {
        for (Index n = 0; n < batch; ++n) {
          const T* src = g.ptr() + (n * channels + c0) * plane;
          T* dst = dp->ptr() + n * cp * plane;
          for (Index i = 0; i < cp * plane; ++i) dst[i] += src[i];
        }
      }
      c0 += cp;
    }
  });
}

template <Real T>
Var<T> expand(const Var<T>& x, const Shape& shape) {
  if (!kernels::broadcastable(shape, x.shape())) {
    throw ShapeMismatch("expand: cannot broadcast " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Tensor<T> out(shape);
  const auto map = kernels::broadcast_map(shape, x.shape());
  for (Index i = 0; i < out.numel(); ++i) out[i] = x.value()[map[static_cast<std::size_t>(i)]];
  return x.tape().record(std::move(out), {x}, [x](Tape<T>& tape, const Tensor<T>& g) {
    if (Tensor<T>* dx = tape.grad_slot(x)) reduce_into(g, x.shape(), *dx);
  });
}

template <Real T>
Var<T> sum(const Var<T>& x) {
  T acc = T(0);
  for (T v : x.value().data()) acc += v;
  return x.tape().record(Tensor<T>::scalar(acc), {x}, [x](Tape<T>& tape, const Tensor<T>& g) {
    Tensor<T>* dx = tape.grad_slot(x);
    const T gv = g[0];
    for (Index i = 0; i < dx->numel(); ++i) (*dx)[i] += gv;
  });
}

template <Real T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().numel()));
}

template <Real T>
Var<T> l1_loss(const Var<T>& pred, const Var<T>& label, Reduction reduction) {
  if (pred.shape() != label.shape()) {
    throw ShapeMismatch("l1_loss: prediction " + to_string(pred.shape()) + " vs label " + to_string(label.shape()));
  }
  const Tensor<T>& p = pred.value();
  const Tensor<T>& l = label.value();
  const T norm = reduction == Reduction::kMean ? T(1) / static_cast<T>(p.numel()) : T(1);
  T acc = T(0);
  std::uint64_t bits = 0;
  for (Index i = 0; i < p.numel(); ++i) {
    const T d = p[i] - l[i];
    acc += std::abs(d);
    bits = kernels::mix64(bits, static_cast<std::uint64_t>((d > T(0)) - (d < T(0)) + 1) * static_cast<std::uint64_t>(i + 1));
  }
  pred.tape().mix_branch(bits);
  return pred.tape().record(Tensor<T>::scalar(acc * norm), {pred, label},
                            [pred, label, norm](Tape<T>& tape, const Tensor<T>& g) {
                              const Tensor<T>& p = pred.value();
                              const Tensor<T>& l = label.value();
                              Tensor<T>* dp = tape.grad_slot(pred);
                              Tensor<T>* dl = tape.grad_slot(label);
                              const T gv = g[0] * norm;
                              for (Index i = 0; i < p.numel(); ++i) {
                                const T d = p[i] - l[i];
                                const T s = static_cast<T>((d > T(0)) - (d < T(0)));
                                if (dp) (*dp)[i] += gv * s;
                                if (dl) (*dl)[i] -= gv * s;
                              }
                            });
}

#define ROA_INSTANTIATE(T)                                                                   \
  template Var<T> relu(const Var<T>&);                                                       \
  template Var<T> sigmoid(const Var<T>&);                                                    \
  template Var<T> add(const Var<T>&, const Var<T>&);                                         \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                         \
  template Var<T> scale(const Var<T>&, T);                                                   \
  template Var<T> add_scalar(const Var<T>&, T);                                              \
  template Var<T> elementwise(ElementwiseKind, const Var<T>&, const Var<T>&, T);             \
  template Var<T> reshape(const Var<T>&, Shape);                                             \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                               \
  template Var<T> expand(const Var<T>&, const Shape&);                                       \
  template Var<T> sum(const Var<T>&);                                                        \
  template Var<T> mean(const Var<T>&);                                                       \
  template Var<T> l1_loss(const Var<T>&, const Var<T>&, Reduction);

ROA_INSTANTIATE(float)
ROA_INSTANTIATE(double)

}  // namespace roa
