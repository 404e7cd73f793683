#pragma once

#include "coderain/conv.hpp"
#include "coderain/tensor.hpp"

#include <vector>

namespace coderain {

/// A convolutional sparse coding instance over a noisy rain feature map.
///
/// The dictionary bank is stored analysis-side (out = code channels,
/// in = image channels): synthesis of a code is conv2d_adjoint(code, dict)
/// and the analysis/transpose operator is conv2d(image, dict). lambda
/// balances sparsity against fidelity, lipschitz bounds the spectral norm
/// of the composed operator, and weights holds the per-channel reweighting
/// factors in (0,1].
struct CscProblem {
  Tensor rain;          // noisy rain map, p channels
  KernelBank dict;      // c filters over p
  double lambda = 0.0;
  double lipschitz = 0.0;
  std::vector<double> weights;  // length c, entries in (0,1]

  CscProblem(Tensor rain_, KernelBank dict_, double lambda_, double lipschitz_,
             std::vector<double> weights_);

  int code_channels() const { return dict.out_channels; }
};

/// Synthesis sum_i f_i (x) z_i as a convolution.
Tensor csc_synthesize(const Tensor& code, const KernelBank& dict);

/// 0.5 * ||rain - synth(code)||^2 + lambda * sum_i ||code_i||_1
double objective(const Tensor& code, const CscProblem& prob);

/// 0.5 * ||rain - synth(code)||^2 + lambda * sum_i w_i * ||code_i||_1
double weighted_objective(const Tensor& code, const CscProblem& prob);

struct LipschitzEstimate {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Largest eigenvalue of the composed operator (analysis o synthesis) by
/// power iteration on a h x w code grid. Stops once the relative change
/// drops below tol; if the budget runs out first, the last iterate is
/// returned with converged = false.
LipschitzEstimate estimate_lipschitz(const KernelBank& dict, int h, int w, int iters = 100,
                                     double tol = 1e-6);

// Safety factor applied to the power-iteration estimate before solving.
inline constexpr double kLipschitzSafety = 1.01;

/// One proximal gradient step with per-channel thresholds w_i * lambda / L.
Tensor ista_step(const Tensor& code, const CscProblem& prob);

/// w (.) soft_threshold(v / w, theta), computed literally in that form.
/// Equals soft_threshold(v, w * theta) elementwise.
Tensor factored_threshold(const Tensor& v, const std::vector<double>& w,
                          const std::vector<double>& theta);

/// T proximal gradient steps from a zero code.
Tensor run_csc(const CscProblem& prob, int steps);

/// Explicit dense synthesis matrix for small instances: rows index the
/// vectorized image (p*h*w), columns the vectorized code (c*h*w), and
/// matrix * vec(code) == vec(csc_synthesize(code, dict)).
struct DenseOracle {
  int rows = 0;
  int cols = 0;
  int image_channels = 0;
  int code_channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> matrix;  // row-major rows x cols

  std::vector<double> apply(const std::vector<double>& v) const;
  std::vector<double> apply_transpose(const std::vector<double>& v) const;
};

inline constexpr int kDenseOracleColumnCap = 4096;

DenseOracle build_dense_oracle(const KernelBank& dict, int h, int w,
                               int max_cols = kDenseOracleColumnCap);

}  // namespace coderain
