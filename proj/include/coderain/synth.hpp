#pragma once

#include "coderain/tensor.hpp"

#include <cstdint>
#include <vector>

namespace coderain {

/// Parameters of the additive streak generator. density is the per-pixel
/// spike probability, intensity the brightness scale, lengths the streak
/// lengths in pixels (one spike map per length).
struct RainSpec {
  double density = 0.01;
  double intensity = 0.6;
  double angle_deg = 90.0;
  std::vector<int> lengths{9};
  int width = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class RainLevel { light, medium, heavy };

// density 0.002 / 0.01 / 0.05 at intensity 0.6, with per-level streak lengths
RainSpec rain_preset(RainLevel level);
const char* rain_level_name(RainLevel level);

/// Anti-aliased line segment of the given length/angle/width as a single
/// filter, normalized to unit L1 mass.
KernelBank make_streak_kernel(int length, double angle_deg, int width);

/// intensity * sum_j (Bernoulli(density) spikes (*) streak kernel_j),
/// broadcast to 3 channels. Deterministic given spec.seed; nonnegative.
Tensor generate_rain(int h, int w, const RainSpec& spec);

/// y = clamp(x + r, 0, 1).
Tensor compose(const Tensor& clean, const Tensor& rain);

/// Procedural piecewise-smooth background in [0.05, 0.95], deterministic
/// per seed. Used to build desk-scale corpora.
Tensor generate_clean(int h, int w, std::uint64_t seed);

}  // namespace coderain
