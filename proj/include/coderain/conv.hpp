#pragma once

#include "coderain/tensor.hpp"

namespace coderain {

/// Stride-1 cross-correlation with zero padding of (s-1)/2 and no bias.
/// Output has k.out_channels channels and the input's spatial size.
/// Requires x.channels == k.in_channels.
Tensor conv2d(const Tensor& x, const KernelBank& k);

/// Adjoint of conv2d with respect to the input:
/// <conv2d(a,k), b> == <a, conv2d_adjoint(b,k)> for compatible shapes.
/// Requires g.channels == k.out_channels; output has k.in_channels channels.
Tensor conv2d_adjoint(const Tensor& g, const KernelBank& k);

/// Accumulates d(sum(dout . conv2d(x,k)))/dk into grad (same layout as the
/// kernel bank: dout.channels x x.channels x s x s).
void conv2d_kernel_grad_accum(const Tensor& x, const Tensor& dout, int kernel_size,
                              std::vector<double>& grad);

// Serial reference implementations. Same arithmetic, no OpenMP; results are
// bitwise identical to the parallel versions at any thread count.
namespace serial {
Tensor conv2d(const Tensor& x, const KernelBank& k);
Tensor conv2d_adjoint(const Tensor& g, const KernelBank& k);
void conv2d_kernel_grad_accum(const Tensor& x, const Tensor& dout, int kernel_size,
                              std::vector<double>& grad);
}  // namespace serial

}  // namespace coderain
