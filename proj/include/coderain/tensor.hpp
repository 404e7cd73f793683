#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace coderain {

// Shape/channel mismatches between tensors and kernels.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Out-of-domain parameter values (negative thresholds, weights outside (0,1], ...).
class ParamError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense real-valued tensor, channels x height x width, row-major.
/// Image data is RGB in [0,1]; feature maps and sparse codes use the same container.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w) {
    if (c <= 0 || h <= 0 || w <= 0)
      throw ShapeError("Tensor: dimensions must be positive");
    data.assign(static_cast<std::size_t>(c) * h * w, 0.0);
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const double* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// A bank of convolution filters, out_channels x in_channels x s x s.
/// The spatial size s must be odd so that "same" zero padding of (s-1)/2
/// preserves the spatial extent.
struct KernelBank {
  int out_channels = 0;
  int in_channels = 0;
  int kernel_size = 0;
  std::vector<double> data;

  KernelBank() = default;
  KernelBank(int oc, int ic, int s) : out_channels(oc), in_channels(ic), kernel_size(s) {
    if (oc <= 0 || ic <= 0 || s <= 0)
      throw ShapeError("KernelBank: dimensions must be positive");
    if (s % 2 == 0)
      throw ParamError("KernelBank: kernel size must be odd, got " + std::to_string(s));
    data.assign(static_cast<std::size_t>(oc) * ic * s * s, 0.0);
  }

  std::size_t size() const { return data.size(); }

  double& at(int oc, int ic, int ky, int kx) {
    return data[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel_size + ky) * kernel_size + kx];
  }
  double at(int oc, int ic, int ky, int kx) const {
    return data[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel_size + ky) * kernel_size + kx];
  }
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* context);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double dot(const Tensor& a, const Tensor& b);
double sum_abs(const Tensor& a);
double sum_sq(const Tensor& a);
double max_abs(const Tensor& a);
bool all_finite(const Tensor& a);

enum class ActivationKind { relu, sigmoid };

/// Elementwise nonlinearity. relu: max(x,0). sigmoid: 1/(1+exp(-x)).
Tensor activation(ActivationKind kind, const Tensor& x);

/// Per-channel soft thresholding: sign(a) * max(|a| - theta_c, 0).
/// theta must have one nonnegative entry per channel.
Tensor soft_threshold(const Tensor& v, const std::vector<double>& theta);

/// Channel means: c x h x w -> length-c vector.
std::vector<double> global_avg_pool(const Tensor& x);

}  // namespace coderain
