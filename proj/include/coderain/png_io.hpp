#pragma once

#include "coderain/tensor.hpp"

#include <string>

namespace coderain {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG as a 3-channel tensor in [0,1] (values / 255).
/// Palette, grayscale and alpha variants are expanded/stripped to RGB.
Tensor read_png(const std::string& path);

/// Writes a 3-channel tensor as 8-bit RGB PNG, clamping to [0,1] and
/// rounding to nearest. Deterministic output bytes.
void write_png(const std::string& path, const Tensor& img);

}  // namespace coderain
