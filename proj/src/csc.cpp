#include "coderain/csc.hpp"

#include <cmath>
#include <random>
#include <string>

namespace coderain {

CscProblem::CscProblem(Tensor rain_, KernelBank dict_, double lambda_, double lipschitz_,
                       std::vector<double> weights_)
    : rain(std::move(rain_)),
      dict(std::move(dict_)),
      lambda(lambda_),
      lipschitz(lipschitz_),
      weights(std::move(weights_)) {
  if (lambda <= 0.0) throw ParamError("CscProblem: lambda must be positive");
  if (lipschitz <= 0.0) throw ParamError("CscProblem: Lipschitz constant must be positive");
  if (dict.in_channels != rain.channels)
    throw ShapeError("CscProblem: dictionary expects " + std::to_string(dict.in_channels) +
                     " image channels, rain map has " + std::to_string(rain.channels));
  if (static_cast<int>(weights.size()) != dict.out_channels)
    throw ShapeError("CscProblem: weight vector length must equal code channel count");
  for (double w : weights)
    if (!(w > 0.0 && w <= 1.0)) throw ParamError("CscProblem: weights must lie in (0,1]");
}

Tensor csc_synthesize(const Tensor& code, const KernelBank& dict) {
  return conv2d_adjoint(code, dict);
}

namespace {

double data_term(const Tensor& code, const CscProblem& prob) {
  Tensor residual = sub(prob.rain, csc_synthesize(code, prob.dict));
  return 0.5 * sum_sq(residual);
}

double penalty(const Tensor& code, const CscProblem& prob, bool weighted) {
  const std::size_t hw = code.plane();
  double acc = 0.0;
  for (int c = 0; c < code.channels; ++c) {
    const double* src = code.channel(c);
    double l1 = 0.0;
    for (std::size_t i = 0; i < hw; ++i) l1 += std::abs(src[i]);
    acc += (weighted ? prob.weights[c] : 1.0) * l1;
  }
  return prob.lambda * acc;
}

}  // namespace

double objective(const Tensor& code, const CscProblem& prob) {
  if (code.channels != prob.code_channels() || code.height != prob.rain.height ||
      code.width != prob.rain.width)
    throw ShapeError("objective: code shape does not match problem");
  return data_term(code, prob) + penalty(code, prob, /*weighted=*/false);
}

double weighted_objective(const Tensor& code, const CscProblem& prob) {
  if (code.channels != prob.code_channels() || code.height != prob.rain.height ||
      code.width != prob.rain.width)
    throw ShapeError("weighted_objective: code shape does not match problem");
  return data_term(code, prob) + penalty(code, prob, /*weighted=*/true);
}

LipschitzEstimate estimate_lipschitz(const KernelBank& dict, int h, int w, int iters, double tol) {
  if (iters < 1) throw ParamError("estimate_lipschitz: iters must be >= 1");
  std::mt19937_64 rng(0x0ddba11dULL);  // fixed seed: estimates are reproducible
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor u(dict.out_channels, h, w);
  for (double& v : u.data) v = dist(rng);

  LipschitzEstimate est;
  double prev = 0.0;
  for (int it = 0; it < iters; ++it) {
    const double norm = std::sqrt(sum_sq(u));
    if (norm == 0.0) break;  // operator annihilated the iterate; eigenvalue 0
    u = scale(u, 1.0 / norm);
    Tensor next = conv2d(csc_synthesize(u, dict), dict);
    est.value = dot(u, next);
    est.iterations = it + 1;
    u = std::move(next);
    if (it > 0 && std::abs(est.value - prev) <= tol * std::max(std::abs(est.value), 1e-30)) {
      est.converged = true;
      break;
    }
    prev = est.value;
  }
  return est;
}

Tensor ista_step(const Tensor& code, const CscProblem& prob) {
  if (code.channels != prob.code_channels() || code.height != prob.rain.height ||
      code.width != prob.rain.width)
    throw ShapeError("ista_step: code shape does not match problem");
  Tensor residual = sub(prob.rain, csc_synthesize(code, prob.dict));
  Tensor gradient_step = add(code, scale(conv2d(residual, prob.dict), 1.0 / prob.lipschitz));
  std::vector<double> theta(prob.weights.size());
  for (std::size_t i = 0; i < theta.size(); ++i)
    theta[i] = prob.weights[i] * prob.lambda / prob.lipschitz;
  return soft_threshold(gradient_step, theta);
}

Tensor factored_threshold(const Tensor& v, const std::vector<double>& w,
                          const std::vector<double>& theta) {
  if (static_cast<int>(w.size()) != v.channels || static_cast<int>(theta.size()) != v.channels)
    throw ShapeError("factored_threshold: per-channel vectors must match channel count");
  for (double wi : w)
    if (!(wi > 0.0 && wi <= 1.0)) throw ParamError("factored_threshold: w must lie in (0,1]");
  for (double t : theta)
    if (t < 0.0) throw ParamError("factored_threshold: theta must be nonnegative");

  Tensor out(v.channels, v.height, v.width);
  const std::size_t hw = v.plane();
  for (int c = 0; c < v.channels; ++c) {
    const double wi = w[c];
    const double wtilde = 1.0 / wi;
    const double t = theta[c];
    const double* src = v.channel(c);
    double* dst = out.channel(c);
    for (std::size_t i = 0; i < hw; ++i) {
      const double a = wtilde * src[i];
      const double m = std::abs(a) - t;
      dst[i] = m > 0.0 ? wi * (a > 0.0 ? m : -m) : 0.0;
    }
  }
  return out;
}

Tensor run_csc(const CscProblem& prob, int steps) {
  if (steps < 0) throw ParamError("run_csc: step count must be nonnegative");
  Tensor code(prob.code_channels(), prob.rain.height, prob.rain.width);
  for (int t = 0; t < steps; ++t) code = ista_step(code, prob);
  return code;
}

std::vector<double> DenseOracle::apply(const std::vector<double>& v) const {
  if (static_cast<int>(v.size()) != cols) throw ShapeError("DenseOracle::apply: size mismatch");
  std::vector<double> out(rows, 0.0);
  for (int r = 0; r < rows; ++r) {
    const double* row = matrix.data() + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

std::vector<double> DenseOracle::apply_transpose(const std::vector<double>& v) const {
  if (static_cast<int>(v.size()) != rows)
    throw ShapeError("DenseOracle::apply_transpose: size mismatch");
  std::vector<double> out(cols, 0.0);
  for (int r = 0; r < rows; ++r) {
    const double* row = matrix.data() + static_cast<std::size_t>(r) * cols;
    const double vr = v[r];
    for (int c = 0; c < cols; ++c) out[c] += row[c] * vr;
  }
  return out;
}

DenseOracle build_dense_oracle(const KernelBank& dict, int h, int w, int max_cols) {
  DenseOracle oracle;
  oracle.image_channels = dict.in_channels;
  oracle.code_channels = dict.out_channels;
  oracle.height = h;
  oracle.width = w;
  oracle.rows = dict.in_channels * h * w;
  oracle.cols = dict.out_channels * h * w;
  if (oracle.cols > max_cols)
    throw ParamError("build_dense_oracle: " + std::to_string(oracle.cols) +
                     " columns exceed the cap of " + std::to_string(max_cols));
  oracle.matrix.assign(static_cast<std::size_t>(oracle.rows) * oracle.cols, 0.0);

  // Column j is the synthesis response of a unit impulse at code position j.
  Tensor impulse(dict.out_channels, h, w);
  for (int j = 0; j < oracle.cols; ++j) {
    impulse.data[j] = 1.0;
    Tensor response = csc_synthesize(impulse, dict);
    impulse.data[j] = 0.0;
    for (int r = 0; r < oracle.rows; ++r)
      oracle.matrix[static_cast<std::size_t>(r) * oracle.cols + j] = response.data[r];
  }
  return oracle;
}

}  // namespace coderain
