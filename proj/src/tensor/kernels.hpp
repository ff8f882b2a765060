#pragma once

// Private helpers shared by the op implementations. Not installed.

#include <algorithm>
#include <cmath>
#include <vector>

#include "roa/ops.hpp"

namespace roa::kernels {

// out[o][p] += sum_k w[o][k] * col[k][p], with k ascending for every (o, p).
// The column axis is processed in blocks so one block of every row stays hot.
template <Real T>
void gemm_accumulate(const T* w, const T* col, T* out, Index rows, Index inner, Index cols) {
  constexpr Index kBlock = 256;
  for (Index p0 = 0; p0 < cols; p0 += kBlock) {
    const Index p1 = std::min(cols, p0 + kBlock);
    for (Index o = 0; o < rows; ++o) {
      T* orow = out + o * cols;
      const T* wrow = w + o * inner;
      for (Index k = 0; k < inner; ++k) {
        const T wv = wrow[k];
        const T* crow = col + k * cols;
        for (Index p = p0; p < p1; ++p) orow[p] += wv * crow[p];
      }
    }
  }
}

// Eight-lane dot product; the lane split is fixed so results are
// reproducible while still vectorizing without reassociation flags.
template <Real T>
T dot(const T* a, const T* b, Index n) {
  T lane[8] = {};
  Index i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  }
  T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// dw[o][k] += dout[o][:] . col[k][:]
template <Real T>
void gemm_grad_weight(const T* dout, const T* col, T* dw, Index rows, Index inner, Index cols) {
  for (Index o = 0; o < rows; ++o) {
    for (Index k = 0; k < inner; ++k) dw[o * inner + k] += dot(dout + o * cols, col + k * cols, cols);
  }
}

// dcol[k][p] = sum_o w[o][k] * dout[o][p]
template <Real T>
void gemm_grad_col(const T* w, const T* dout, T* dcol, Index rows, Index inner, Index cols) {
  std::fill(dcol, dcol + inner * cols, T(0));
  for (Index o = 0; o < rows; ++o) {
    const T* drow = dout + o * cols;
    for (Index k = 0; k < inner; ++k) {
      const T wv = w[o * inner + k];
      T* crow = dcol + k * cols;
      for (Index p = 0; p < cols; ++p) crow[p] += wv * drow[p];
    }
  }
}

struct ConvDims {
  Index channels, height, width;
  Index kernel;
  Index out_height, out_width;
  ConvGeometry geom;
};

// One image (C x H x W) to a (C*K*K) x (H'*W') column matrix; padding reads 0.
template <Real T>
void im2col(const T* x, const ConvDims& d, T* col) {
  const Index plane = d.out_height * d.out_width;
  for (Index c = 0; c < d.channels; ++c) {
    const T* xc = x + c * d.height * d.width;
    for (Index ky = 0; ky < d.kernel; ++ky) {
      for (Index kx = 0; kx < d.kernel; ++kx) {
        T* row = col + ((c * d.kernel + ky) * d.kernel + kx) * plane;
        for (Index oy = 0; oy < d.out_height; ++oy) {
          const Index iy = oy * d.geom.stride - d.geom.padding + ky * d.geom.dilation;
          T* dst = row + oy * d.out_width;
          if (iy < 0 || iy >= d.height) {
            std::fill(dst, dst + d.out_width, T(0));
            continue;
          }
          for (Index ox = 0; ox < d.out_width; ++ox) {
            const Index ix = ox * d.geom.stride - d.geom.padding + kx * d.geom.dilation;
            dst[ox] = (ix >= 0 && ix < d.width) ? xc[iy * d.width + ix] : T(0);
          }
        }
      }
    }
  }
}

template <Real T>
void col2im(const T* col, const ConvDims& d, T* dx) {
  const Index plane = d.out_height * d.out_width;
  for (Index c = 0; c < d.channels; ++c) {
    T* xc = dx + c * d.height * d.width;
    for (Index ky = 0; ky < d.kernel; ++ky) {
      for (Index kx = 0; kx < d.kernel; ++kx) {
        const T* row = col + ((c * d.kernel + ky) * d.kernel + kx) * plane;
        for (Index oy = 0; oy < d.out_height; ++oy) {
          const Index iy = oy * d.geom.stride - d.geom.padding + ky * d.geom.dilation;
          if (iy < 0 || iy >= d.height) continue;
          for (Index ox = 0; ox < d.out_width; ++ox) {
            const Index ix = ox * d.geom.stride - d.geom.padding + kx * d.geom.dilation;
            if (ix >= 0 && ix < d.width) xc[iy * d.width + ix] += row[oy * d.out_width + ox];
          }
        }
      }
    }
  }
}

// Bilinear tap on one H x W plane with zero outside. The weighted sum is
// ordered so that an on-grid point returns the pixel value exactly.
template <Real T>
struct BilinearTap {
  Index y0, x0;
  T ly, lx, hy, hx;

  BilinearTap(T y, T x) {
    const T fy = std::floor(y);
    const T fx = std::floor(x);
    y0 = static_cast<Index>(fy);
    x0 = static_cast<Index>(fx);
    ly = y - fy;
    lx = x - fx;
    hy = T(1) - ly;
    hx = T(1) - lx;
  }

  static T pixel(const T* plane, Index h, Index w, Index y, Index x) {
    return (y >= 0 && y < h && x >= 0 && x < w) ? plane[y * w + x] : T(0);
  }

  T sample(const T* plane, Index h, Index w) const {
    const T v00 = pixel(plane, h, w, y0, x0);
    const T v01 = pixel(plane, h, w, y0, x0 + 1);
    const T v10 = pixel(plane, h, w, y0 + 1, x0);
    const T v11 = pixel(plane, h, w, y0 + 1, x0 + 1);
    return hy * hx * v00 + hy * lx * v01 + ly * hx * v10 + ly * lx * v11;
  }

  // d(sample)/dy, d(sample)/dx
  void coord_grad(const T* plane, Index h, Index w, T& dy, T& dx) const {
    const T v00 = pixel(plane, h, w, y0, x0);
    const T v01 = pixel(plane, h, w, y0, x0 + 1);
    const T v10 = pixel(plane, h, w, y0 + 1, x0);
    const T v11 = pixel(plane, h, w, y0 + 1, x0 + 1);
    dy = hx * (v10 - v00) + lx * (v11 - v01);
    dx = hy * (v01 - v00) + ly * (v11 - v10);
  }

  void scatter(T* plane, Index h, Index w, T g) const {
    auto put = [&](Index y, Index x, T v) {
      if (y >= 0 && y < h && x >= 0 && x < w) plane[y * w + x] += v;
    };
    put(y0, x0, g * hy * hx);
    put(y0, x0 + 1, g * hy * lx);
    put(y0 + 1, x0, g * ly * hx);
    put(y0 + 1, x0 + 1, g * ly * lx);
  }

  std::uint64_t cell_bits() const {
    return static_cast<std::uint64_t>(y0) * 0x9E3779B1ULL ^ static_cast<std::uint64_t>(x0);
  }
};

// For each linear index of `full`, the linear index of the broadcast operand.
std::vector<Index> broadcast_map(const Shape& full, const Shape& part);
bool broadcastable(const Shape& full, const Shape& part);

inline std::uint64_t mix64(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

}  // namespace roa::kernels
