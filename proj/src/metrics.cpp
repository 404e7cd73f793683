#include "coderain/metrics.hpp"

#include <cmath>
#include <vector>

namespace coderain {

Tensor rgb_to_ycbcr(const Tensor& rgb) {
  if (rgb.channels != 3) throw ShapeError("rgb_to_ycbcr: expected 3 channels");
  Tensor out(3, rgb.height, rgb.width);
  const std::size_t hw = rgb.plane();
  const double* r = rgb.channel(0);
  const double* g = rgb.channel(1);
  const double* b = rgb.channel(2);
  double* yc = out.channel(0);
  double* cb = out.channel(1);
  double* cr = out.channel(2);
  for (std::size_t i = 0; i < hw; ++i) {
    const double y = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    yc[i] = y;
    cb[i] = (b[i] - y) * 0.564 + 0.5;
    cr[i] = (r[i] - y) * 0.713 + 0.5;
  }
  return out;
}

Tensor luma(const Tensor& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw ShapeError("luma: expected 1 or 3 channels");
  Tensor out(1, img.height, img.width);
  const std::size_t hw = img.plane();
  const double* r = img.channel(0);
  const double* g = img.channel(1);
  const double* b = img.channel(2);
  for (std::size_t i = 0; i < hw; ++i) out.data[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

double psnr(const Tensor& a, const Tensor& b, bool on_y) {
  check_same_shape(a, b, "psnr");
  double mse = 0.0;
  if (on_y && a.channels == 3) {
    Tensor ya = luma(a), yb = luma(b);
    for (std::size_t i = 0; i < ya.size(); ++i) {
      const double d = ya.data[i] - yb.data[i];
      mse += d * d;
    }
    mse /= static_cast<double>(ya.size());
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a.data[i] - b.data[i];
      mse += d * d;
    }
    mse /= static_cast<double>(a.size());
  }
  if (mse <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> w(kWindow);
  const int half = kWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - half;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// separable valid-mode Gaussian filtering: rows then columns
Tensor gauss_valid(const Tensor& img, const std::vector<double>& w) {
  const int h = img.height, wd = img.width;
  const int out_w = wd - kWindow + 1, out_h = h - kWindow + 1;
  Tensor horiz(1, h, out_w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += w[k] * img.at(0, y, x + k);
      horiz.at(0, y, x) = acc;
    }
  Tensor out(1, out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += w[k] * horiz.at(0, y + k, x);
      out.at(0, y, x) = acc;
    }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tensor out(a.channels, a.height, a.width);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ssim");
  if (a.height < kWindow || a.width < kWindow)
    throw ShapeError("ssim: image smaller than the 11x11 window");
  const Tensor ya = luma(a), yb = luma(b);
  const std::vector<double> w = gaussian_window();

  const Tensor mu_a = gauss_valid(ya, w);
  const Tensor mu_b = gauss_valid(yb, w);
  const Tensor e_aa = gauss_valid(hadamard(ya, ya), w);
  const Tensor e_bb = gauss_valid(hadamard(yb, yb), w);
  const Tensor e_ab = gauss_valid(hadamard(ya, yb), w);

  const double c1 = kK1 * kK1;
  const double c2 = kK2 * kK2;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.data[i], mb = mu_b.data[i];
    const double va = e_aa.data[i] - ma * ma;
    const double vb = e_bb.data[i] - mb * mb;
    const double cov = e_ab.data[i] - ma * mb;
    acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

}  // namespace coderain
