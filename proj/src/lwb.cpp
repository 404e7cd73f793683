#include "coderain/lwb.hpp"

#include <cmath>
#include <string>

namespace coderain {

LwbParams::LwbParams(int channels_, int reduction_) : channels(channels_), reduction(reduction_) {
  if (channels <= 0) throw ShapeError("LwbParams: channel count must be positive");
  if (reduction <= 0 || channels % reduction != 0)
    throw ParamError("LwbParams: reduction " + std::to_string(reduction) +
                     " must be a positive divisor of " + std::to_string(channels));
  hidden = channels / reduction;
  fc1.assign(static_cast<std::size_t>(hidden) * channels, 0.0);
  fc2.assign(static_cast<std::size_t>(channels) * hidden, 0.0);
}

LwbResult lwb_forward(const Tensor& alpha, const LwbParams& params, LwbTrace* trace) {
  if (alpha.channels != params.channels)
    throw ShapeError("lwb_forward: input has " + std::to_string(alpha.channels) +
                     " channels, gate expects " + std::to_string(params.channels));
  const int c = params.channels, hid = params.hidden;
  const std::vector<double> pooled = global_avg_pool(alpha);

  std::vector<double> h_pre(hid, 0.0), h(hid, 0.0);
  for (int i = 0; i < hid; ++i) {
    double acc = 0.0;
    const double* row = params.fc1.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) acc += row[j] * pooled[j];
    h_pre[i] = acc;
    h[i] = acc > 0.0 ? acc : 0.0;
  }

  LwbResult result;
  result.weights.values.resize(c);
  result.gated = Tensor(alpha.channels, alpha.height, alpha.width);
  std::vector<double> logits(c, 0.0);
  const std::size_t hw = alpha.plane();
  for (int i = 0; i < c; ++i) {
    double acc = 0.0;
    const double* row = params.fc2.data() + static_cast<std::size_t>(i) * hid;
    for (int j = 0; j < hid; ++j) acc += row[j] * h[j];
    logits[i] = acc;
    const double gate = 1.0 / (1.0 + std::exp(-acc));
    result.weights.values[i] = gate;
    const double* src = alpha.channel(i);
    double* dst = result.gated.channel(i);
    for (std::size_t k = 0; k < hw; ++k) dst[k] = src[k] * gate;
  }
  if (trace) {
    trace->pooled = pooled;
    trace->hidden_pre = std::move(h_pre);
    trace->hidden = std::move(h);
    trace->logits = std::move(logits);
    trace->gate = result.weights;
  }
  return result;
}

double rde(const WeightVector& wtilde) {
  double acc = 0.0;
  for (double v : wtilde.values) acc += v;
  return acc / static_cast<double>(wtilde.values.size());
}

}  // namespace coderain
