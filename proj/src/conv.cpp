#include "coderain/conv.hpp"

#include <algorithm>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace coderain {

namespace {

// Inputs are copied into rows padded by (s-1)/2 zeros on both sides so the
// per-row kernels run branch-free over the full width.
std::vector<double> pad_rows(const Tensor& x, int pad) {
  const int wp = x.width + 2 * pad;
  std::vector<double> out(static_cast<std::size_t>(x.channels) * x.height * wp, 0.0);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < x.height; ++y)
      std::memcpy(out.data() + (static_cast<std::size_t>(c) * x.height + y) * wp + pad,
                  x.channel(c) + static_cast<std::size_t>(y) * x.width,
                  static_cast<std::size_t>(x.width) * sizeof(double));
  return out;
}

// One output row of the forward pass, all taps of a kernel row fused into a
// single pass. Each output row is owned by exactly one caller, so the
// accumulation order is fixed regardless of scheduling.
template <int S>
inline void conv_row(const double* xpad, const double* kernel, int ic_n, int h, int w, int wp,
                     int s_dyn, int oc, int y, double* out_row) {
  const int s = S > 0 ? S : s_dyn;
  const int pad = (s - 1) / 2;
  std::fill(out_row, out_row + w, 0.0);
  for (int ic = 0; ic < ic_n; ++ic) {
    const std::size_t kbase = (static_cast<std::size_t>(oc) * ic_n + ic) * s * s;
    for (int ky = 0; ky < s; ++ky) {
      const int iy = y + ky - pad;
      if (iy < 0 || iy >= h) continue;
      const double* src = xpad + (static_cast<std::size_t>(ic) * h + iy) * wp;
      const double* krow = kernel + kbase + static_cast<std::size_t>(ky) * s;
      if constexpr (S > 0) {
#pragma omp simd
        for (int xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int kx = 0; kx < S; ++kx) acc += krow[kx] * src[xx + kx];
          out_row[xx] += acc;
        }
      } else {
        for (int kx = 0; kx < s; ++kx) {
          const double wgt = krow[kx];
          const double* shifted = src + kx;
#pragma omp simd
          for (int xx = 0; xx < w; ++xx) out_row[xx] += wgt * shifted[xx];
        }
      }
    }
  }
}

// One output row of the adjoint: the same fused pass with the kernel taps
// read in reverse and the row offset mirrored.
template <int S>
inline void adjoint_row(const double* gpad, const double* kernel, int oc_n, int ic_n, int h,
                        int w, int wp, int s_dyn, int ic, int y, double* out_row) {
  const int s = S > 0 ? S : s_dyn;
  const int pad = (s - 1) / 2;
  std::fill(out_row, out_row + w, 0.0);
  for (int oc = 0; oc < oc_n; ++oc) {
    const std::size_t kbase = (static_cast<std::size_t>(oc) * ic_n + ic) * s * s;
    for (int ky = 0; ky < s; ++ky) {
      const int gy = y + pad - ky;
      if (gy < 0 || gy >= h) continue;
      const double* src = gpad + (static_cast<std::size_t>(oc) * h + gy) * wp;
      const double* krow = kernel + kbase + static_cast<std::size_t>(ky) * s;
      if constexpr (S > 0) {
#pragma omp simd
        for (int xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int kx = 0; kx < S; ++kx) acc += krow[kx] * src[xx + (S - 1 - kx)];
          out_row[xx] += acc;
        }
      } else {
        for (int kx = 0; kx < s; ++kx) {
          const double wgt = krow[kx];
          const double* shifted = src + (s - 1 - kx);
#pragma omp simd
          for (int xx = 0; xx < w; ++xx) out_row[xx] += wgt * shifted[xx];
        }
      }
    }
  }
}

// Gradient of one (oc, ic) kernel slice: s*s dot products between output
// rows and shifted padded input rows.
inline void kernel_grad_slice(const double* xpad, const Tensor& dout, int h, int w, int wp, int s,
                              int oc, int ic, double* grad_slice) {
  const int pad = (s - 1) / 2;
  for (int ky = 0; ky < s; ++ky) {
    const int ylo = std::max(0, pad - ky);
    const int yhi = std::min(h, h + pad - ky);
    for (int kx = 0; kx < s; ++kx) {
      double acc = 0.0;
      for (int y = ylo; y < yhi; ++y) {
        const double* d_row = dout.channel(oc) + static_cast<std::size_t>(y) * w;
        const double* in_row = xpad + (static_cast<std::size_t>(ic) * h + (y + ky - pad)) * wp + kx;
        double row_acc = 0.0;
#pragma omp simd reduction(+ : row_acc)
        for (int xx = 0; xx < w; ++xx) row_acc += d_row[xx] * in_row[xx];
        acc += row_acc;
      }
      grad_slice[ky * s + kx] += acc;
    }
  }
}

inline void check_conv_shapes(const Tensor& x, const KernelBank& k) {
  if (x.channels != k.in_channels)
    throw ShapeError("conv2d: input has " + std::to_string(x.channels) + " channels, kernel expects " +
                     std::to_string(k.in_channels));
}

inline void check_adjoint_shapes(const Tensor& g, const KernelBank& k) {
  if (g.channels != k.out_channels)
    throw ShapeError("conv2d_adjoint: input has " + std::to_string(g.channels) +
                     " channels, kernel produces " + std::to_string(k.out_channels));
}

template <int S>
void conv2d_loop(const Tensor& x, const KernelBank& k, const std::vector<double>& xpad,
                 Tensor& out, bool parallel) {
  const int oc_n = k.out_channels, h = x.height, w = x.width;
  const int wp = w + k.kernel_size - 1;
  if (parallel) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < oc_n; ++oc)
      for (int y = 0; y < h; ++y)
        conv_row<S>(xpad.data(), k.data.data(), k.in_channels, h, w, wp, k.kernel_size, oc, y,
                    out.channel(oc) + static_cast<std::size_t>(y) * w);
  } else {
    for (int oc = 0; oc < oc_n; ++oc)
      for (int y = 0; y < h; ++y)
        conv_row<S>(xpad.data(), k.data.data(), k.in_channels, h, w, wp, k.kernel_size, oc, y,
                    out.channel(oc) + static_cast<std::size_t>(y) * w);
  }
}

template <int S>
void adjoint_loop(const Tensor& g, const KernelBank& k, const std::vector<double>& gpad,
                  Tensor& out, bool parallel) {
  const int ic_n = k.in_channels, h = g.height, w = g.width;
  const int wp = w + k.kernel_size - 1;
  if (parallel) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int ic = 0; ic < ic_n; ++ic)
      for (int y = 0; y < h; ++y)
        adjoint_row<S>(gpad.data(), k.data.data(), k.out_channels, ic_n, h, w, wp, k.kernel_size,
                       ic, y, out.channel(ic) + static_cast<std::size_t>(y) * w);
  } else {
    for (int ic = 0; ic < ic_n; ++ic)
      for (int y = 0; y < h; ++y)
        adjoint_row<S>(gpad.data(), k.data.data(), k.out_channels, ic_n, h, w, wp, k.kernel_size,
                       ic, y, out.channel(ic) + static_cast<std::size_t>(y) * w);
  }
}

Tensor conv2d_impl(const Tensor& x, const KernelBank& k, bool parallel) {
  check_conv_shapes(x, k);
  Tensor out(k.out_channels, x.height, x.width);
  const std::vector<double> xpad = pad_rows(x, (k.kernel_size - 1) / 2);
  switch (k.kernel_size) {
    case 1:
      conv2d_loop<1>(x, k, xpad, out, parallel);
      break;
    case 3:
      conv2d_loop<3>(x, k, xpad, out, parallel);
      break;
    case 5:
      conv2d_loop<5>(x, k, xpad, out, parallel);
      break;
    case 7:
      conv2d_loop<7>(x, k, xpad, out, parallel);
      break;
    default:
      conv2d_loop<0>(x, k, xpad, out, parallel);
      break;
  }
  return out;
}

Tensor adjoint_impl(const Tensor& g, const KernelBank& k, bool parallel) {
  check_adjoint_shapes(g, k);
  Tensor out(k.in_channels, g.height, g.width);
  const std::vector<double> gpad = pad_rows(g, (k.kernel_size - 1) / 2);
  switch (k.kernel_size) {
    case 1:
      adjoint_loop<1>(g, k, gpad, out, parallel);
      break;
    case 3:
      adjoint_loop<3>(g, k, gpad, out, parallel);
      break;
    case 5:
      adjoint_loop<5>(g, k, gpad, out, parallel);
      break;
    case 7:
      adjoint_loop<7>(g, k, gpad, out, parallel);
      break;
    default:
      adjoint_loop<0>(g, k, gpad, out, parallel);
      break;
  }
  return out;
}

void kernel_grad_impl(const Tensor& x, const Tensor& dout, int s, std::vector<double>& grad,
                      bool parallel) {
  const int oc_n = dout.channels, ic_n = x.channels;
  if (grad.size() != static_cast<std::size_t>(oc_n) * ic_n * s * s)
    throw ShapeError("conv2d_kernel_grad_accum: gradient buffer size mismatch");
  if (x.height != dout.height || x.width != dout.width)
    throw ShapeError("conv2d_kernel_grad_accum: spatial size mismatch");
  const std::vector<double> xpad = pad_rows(x, (s - 1) / 2);
  const int wp = x.width + s - 1;
  if (parallel) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int oc = 0; oc < oc_n; ++oc)
      for (int ic = 0; ic < ic_n; ++ic)
        kernel_grad_slice(xpad.data(), dout, x.height, x.width, wp, s, oc, ic,
                          grad.data() + (static_cast<std::size_t>(oc) * ic_n + ic) * s * s);
  } else {
    for (int oc = 0; oc < oc_n; ++oc)
      for (int ic = 0; ic < ic_n; ++ic)
        kernel_grad_slice(xpad.data(), dout, x.height, x.width, wp, s, oc, ic,
                          grad.data() + (static_cast<std::size_t>(oc) * ic_n + ic) * s * s);
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const KernelBank& k) { return conv2d_impl(x, k, true); }

Tensor conv2d_adjoint(const Tensor& g, const KernelBank& k) { return adjoint_impl(g, k, true); }

void conv2d_kernel_grad_accum(const Tensor& x, const Tensor& dout, int kernel_size,
                              std::vector<double>& grad) {
  kernel_grad_impl(x, dout, kernel_size, grad, true);
}

namespace serial {

Tensor conv2d(const Tensor& x, const KernelBank& k) { return conv2d_impl(x, k, false); }

Tensor conv2d_adjoint(const Tensor& g, const KernelBank& k) { return adjoint_impl(g, k, false); }

void conv2d_kernel_grad_accum(const Tensor& x, const Tensor& dout, int kernel_size,
                              std::vector<double>& grad) {
  kernel_grad_impl(x, dout, kernel_size, grad, false);
}

}  // namespace serial

}  // namespace coderain
