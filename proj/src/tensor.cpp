#include "coderain/tensor.hpp"

#include <cmath>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace coderain {

namespace {

// The solver loops allocate and free same-sized multi-hundred-KB buffers at
// high rate; keep those blocks on the heap instead of returning pages to the
// kernel on every free.
const bool malloc_tuned = [] {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
  return true;
}();

}  // namespace

void check_same_shape(const Tensor& a, const Tensor& b, const char* context) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(context) + ": shape mismatch (" + std::to_string(a.channels) + "x" +
                     std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" +
                     std::to_string(b.width) + ")");
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.channels, a.height, a.width);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.channels, a.height, a.width);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.channels, a.height, a.width);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * s;
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

double sum_abs(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data) acc += std::abs(v);
  return acc;
}

double sum_sq(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v * v;
  return acc;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(const Tensor& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor activation(ActivationKind kind, const Tensor& x) {
  Tensor out(x.channels, x.height, x.width);
  if (kind == ActivationKind::relu) {
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
  }
  return out;
}

Tensor soft_threshold(const Tensor& v, const std::vector<double>& theta) {
  if (static_cast<int>(theta.size()) != v.channels)
    throw ShapeError("soft_threshold: theta length must equal channel count");
  for (double t : theta)
    if (t < 0.0) throw ParamError("soft_threshold: thresholds must be nonnegative");
  Tensor out(v.channels, v.height, v.width);
  const std::size_t hw = v.plane();
  for (int c = 0; c < v.channels; ++c) {
    const double t = theta[c];
    const double* src = v.channel(c);
    double* dst = out.channel(c);
    for (std::size_t i = 0; i < hw; ++i) {
      const double a = src[i];
      const double m = std::abs(a) - t;
      dst[i] = m > 0.0 ? (a > 0.0 ? m : -m) : 0.0;
    }
  }
  return out;
}

std::vector<double> global_avg_pool(const Tensor& x) {
  std::vector<double> means(x.channels, 0.0);
  const std::size_t hw = x.plane();
  for (int c = 0; c < x.channels; ++c) {
    const double* src = x.channel(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += src[i];
    means[c] = acc / static_cast<double>(hw);
  }
  return means;
}

}  // namespace coderain
