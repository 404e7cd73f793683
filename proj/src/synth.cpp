#include "coderain/synth.hpp"

#include "coderain/conv.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace coderain {

void RainSpec::validate() const {
  if (!(density >= 0.0 && density <= 1.0))
    throw ParamError("RainSpec: density must lie in [0,1]");
  if (intensity <= 0.0) throw ParamError("RainSpec: intensity must be positive");
  if (lengths.empty()) throw ParamError("RainSpec: at least one streak length required");
  for (int len : lengths)
    if (len < 1) throw ParamError("RainSpec: streak lengths must be >= 1");
  if (width < 1) throw ParamError("RainSpec: width must be >= 1");
}

RainSpec rain_preset(RainLevel level) {
  RainSpec spec;
  spec.intensity = 0.6;
  spec.width = 1;
  spec.angle_deg = 90.0;
  switch (level) {
    case RainLevel::light:
      spec.density = 0.002;
      spec.lengths = {5};
      break;
    case RainLevel::medium:
      spec.density = 0.01;
      spec.lengths = {5, 9};
      break;
    case RainLevel::heavy:
      spec.density = 0.05;
      spec.lengths = {5, 9, 13};
      break;
  }
  return spec;
}

const char* rain_level_name(RainLevel level) {
  switch (level) {
    case RainLevel::light:
      return "light";
    case RainLevel::medium:
      return "medium";
    default:
      return "heavy";
  }
}

KernelBank make_streak_kernel(int length, double angle_deg, int width) {
  if (length < 1) throw ParamError("make_streak_kernel: length must be >= 1");
  if (width < 1) throw ParamError("make_streak_kernel: width must be >= 1");
  if (length == 1) {
    KernelBank k(1, 1, 1);
    k.data[0] = 1.0;
    return k;
  }
  const double half = 0.5 * (length - 1);
  const int margin = static_cast<int>(std::ceil(0.5 * width + 0.5));
  int size = 2 * (static_cast<int>(std::ceil(half)) + margin) + 1;
  KernelBank k(1, 1, size);

  const double rad = angle_deg * M_PI / 180.0;
  double dx = std::cos(rad), dy = std::sin(rad);
  // snap nearly axis-aligned directions so exact angles stay exact
  if (std::abs(dx) < 1e-9) dx = 0.0;
  if (std::abs(dy) < 1e-9) dy = 0.0;
  const double norm = std::hypot(dx, dy);
  dx /= norm;
  dy /= norm;
  const int center = size / 2;
  double mass = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x - center, py = y - center;
      // distance from the pixel center to the segment through the origin
      const double t = std::clamp(px * dx + py * dy, -half, half);
      const double ex = px - t * dx, ey = py - t * dy;
      const double dist = std::sqrt(ex * ex + ey * ey);
      const double coverage = std::clamp(0.5 * width + 0.5 - dist, 0.0, 1.0);
      k.at(0, 0, y, x) = coverage;
      mass += coverage;
    }
  }
  if (mass <= 0.0) throw ParamError("make_streak_kernel: degenerate segment");
  for (double& v : k.data) v /= mass;
  return k;
}

Tensor generate_rain(int h, int w, const RainSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor accum(1, h, w);
  for (int len : spec.lengths) {
    Tensor spikes(1, h, w);
    for (std::size_t i = 0; i < spikes.size(); ++i)
      spikes.data[i] = unit(rng) < spec.density ? 1.0 : 0.0;
    KernelBank kernel = make_streak_kernel(len, spec.angle_deg, spec.width);
    Tensor streaks = conv2d(spikes, kernel);
    for (std::size_t i = 0; i < accum.size(); ++i) accum.data[i] += streaks.data[i];
  }
  Tensor rain(3, h, w);
  for (int c = 0; c < 3; ++c) {
    double* dst = rain.channel(c);
    for (std::size_t i = 0; i < accum.size(); ++i) dst[i] = spec.intensity * accum.data[i];
  }
  return rain;
}

Tensor compose(const Tensor& clean, const Tensor& rain) {
  check_same_shape(clean, rain, "compose");
  Tensor y(clean.channels, clean.height, clean.width);
  for (std::size_t i = 0; i < y.size(); ++i)
    y.data[i] = std::clamp(clean.data[i] + rain.data[i], 0.0, 1.0);
  return y;
}

Tensor generate_clean(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // low-frequency luminance waves
  Tensor base(1, h, w);
  const double mean = 0.35 + 0.3 * unit(rng);
  for (double& v : base.data) v = mean;
  const int waves = 2 + static_cast<int>(unit(rng) * 2.0);
  const double diag = std::max(h, w);
  for (int k = 0; k < waves; ++k) {
    const double amp = 0.05 + 0.10 * unit(rng);
    const double fx = (0.5 + 2.0 * unit(rng)) / diag;
    const double fy = (0.5 + 2.0 * unit(rng)) / diag;
    const double phase = 2.0 * M_PI * unit(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        base.at(0, y, x) += amp * std::cos(2.0 * M_PI * (fx * x + fy * y) + phase);
  }

  // soft-edged discs with color tints
  Tensor img(3, h, w);
  std::array<double, 3> tint{};
  for (int c = 0; c < 3; ++c) tint[c] = -0.06 + 0.12 * unit(rng);
  for (int c = 0; c < 3; ++c) {
    double* dst = img.channel(c);
    for (std::size_t i = 0; i < base.size(); ++i) dst[i] = base.data[i] + tint[c];
  }
  const int discs = 2 + static_cast<int>(unit(rng) * 3.0);
  for (int d = 0; d < discs; ++d) {
    const double cx = unit(rng) * w, cy = unit(rng) * h;
    const double radius = (0.08 + 0.2 * unit(rng)) * diag;
    const double edge = 1.5 + 2.0 * unit(rng);
    std::array<double, 3> color{};
    for (int c = 0; c < 3; ++c) color[c] = -0.25 + 0.5 * unit(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dist = std::hypot(x - cx, y - cy);
        const double t = std::clamp((radius - dist) / edge, 0.0, 1.0);
        if (t <= 0.0) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) += t * color[c];
      }
    }
  }
  for (double& v : img.data) v = std::clamp(v, 0.05, 0.95);
  return img;
}

}  // namespace coderain
