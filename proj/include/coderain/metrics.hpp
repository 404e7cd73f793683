#pragma once

#include "coderain/tensor.hpp"

namespace coderain {

/// Full-range BT.601 transform; input RGB in [0,1], Y lands in [0,1].
Tensor rgb_to_ycbcr(const Tensor& rgb);

/// Extracts the BT.601 luma channel (identity on 1-channel input).
Tensor luma(const Tensor& img);

/// 10*log10(1/MSE) with MSE over the luma channel when on_y, over all
/// channels otherwise. Identical inputs report the 100 dB cap.
double psnr(const Tensor& a, const Tensor& b, bool on_y = true);

inline constexpr double kPsnrCapDb = 100.0;

/// Mean local SSIM on the luma channel: 11x11 Gaussian window, sigma 1.5,
/// K1=0.01, K2=0.03, dynamic range 1. Requires min dimension >= 11.
double ssim(const Tensor& a, const Tensor& b);

}  // namespace coderain
