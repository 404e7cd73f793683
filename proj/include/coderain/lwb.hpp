#pragma once

#include "coderain/tensor.hpp"

#include <vector>

namespace coderain {

/// Channel-attention gate: two bias-free fully connected layers around a
/// ReLU, fed by global average pooling and squashed by a sigmoid. The gate
/// rescales each channel of its input by the resulting weight.
struct LwbParams {
  int channels = 0;
  int reduction = 1;
  int hidden = 0;
  std::vector<double> fc1;  // hidden x channels
  std::vector<double> fc2;  // channels x hidden

  LwbParams() = default;
  LwbParams(int channels_, int reduction_);
};

/// Per-channel gate values; sigmoid outputs, each strictly inside (0,1).
struct WeightVector {
  std::vector<double> values;
};

struct LwbResult {
  Tensor gated;
  WeightVector weights;
};

/// Intermediates of one gate evaluation, kept for the reverse pass.
struct LwbTrace {
  std::vector<double> pooled, hidden_pre, hidden, logits;
  WeightVector gate;
};

/// gated = alpha (.) sigmoid(fc2(relu(fc1(avg_pool(alpha))))), broadcast
/// per channel. The gate depends on alpha only through its channel means.
LwbResult lwb_forward(const Tensor& alpha, const LwbParams& params, LwbTrace* trace = nullptr);

/// Channel mean of a gate vector; grows with rain intensity on trained
/// models and serves as the continuous rain density estimate.
double rde(const WeightVector& wtilde);

}  // namespace coderain
