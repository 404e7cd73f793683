#pragma once

#include "coderain/conv.hpp"
#include "coderain/lwb.hpp"
#include "coderain/tensor.hpp"

#include <array>
#include <string>
#include <vector>

namespace coderain {

/// Architecture switches.
///   grl: recover the image by subtracting the predicted rain layer from the
///        input (off: the head predicts the image directly).
///   lrl: keep the additive input injection in every iteration (off: only
///        the first iteration sees it).
///   pa:  activation block closes each iteration, so it precedes the next
///        weight layer (off: the weight layer closes the iteration).
///   rw:  channel-attention gates around the thresholding (off: identity).
struct Toggles {
  bool grl = true;
  bool lrl = true;
  bool pa = true;
  bool rw = true;
};

/// Single-scale model: two extractor layers, the unfolded solver pair
/// (g maps features to codes, s maps codes to codes and is shared across
/// iterations, as are both gates), a two-layer reconstruction head and a
/// per-channel threshold vector.
struct ModelParams {
  int p = 0;      // feature channels
  int c = 0;      // code channels
  int ksize = 3;  // filter size
  int T = 0;      // unfolded iterations
  int rho = 16;   // gate reduction
  Toggles toggles;

  KernelBank e1, e2;  // extractor: p over 3, p over p
  KernelBank g;       // c over p
  KernelBank s;       // c over c, shared across iterations
  KernelBank e3;      // p over c
  KernelBank e4;      // 3 over p
  LwbParams lwb_w, lwb_wtilde;
  std::vector<double> theta;  // length c, >= 0

  ModelParams() = default;
  ModelParams(int p_, int c_, int ksize_, int T_, int rho_, Toggles toggles_ = {});
};

/// Three-dictionary multiscale model with strictly increasing filter sizes.
/// Extractor and head are shared; solver banks, gates and per-iteration
/// thresholds are per scale.
struct MsModelParams {
  int p = 0;
  int c = 0;  // code channels per scale
  int T = 0;
  int rho = 16;
  std::array<int, 3> scale_sizes{3, 5, 7};
  Toggles toggles;

  KernelBank e1, e2;                   // p over 3, p over p (size scale_sizes[0])
  KernelBank e4;                       // 3 over p
  std::array<KernelBank, 3> g;         // c over p, size s_j
  std::array<KernelBank, 3> s;         // p over c, size s_j
  std::array<LwbParams, 3> lwb_w, lwb_wtilde;
  std::vector<std::array<std::vector<double>, 3>> theta;  // [T][scale], each length c

  MsModelParams() = default;
  MsModelParams(int p_, int c_, std::array<int, 3> sizes, int T_, int rho_, Toggles toggles_ = {});
};

// Paper-scale defaults; desk experiments use smaller instances.
ModelParams default_code_model();    // p=128, c=256, s=3, T=25
MsModelParams default_mcode_model();  // p=48, c=96, s={3,5,7}, T=25

struct DerainResult {
  Tensor x;  // derained image
  Tensor r;  // rain layer
  WeightVector wtilde_final;
  double rde = 0.0;
};

/// Noisy rain features: relu(e2 (*) relu(e1 (*) y)).
Tensor extract_rain(const Tensor& y, const ModelParams& m);
Tensor extract_rain(const Tensor& y, const MsModelParams& m);

struct LwistaOut {
  Tensor code;
  WeightVector wtilde;  // gate of the final iteration (all ones when rw is off)
};

/// Unfolded solver; starts from a zero code unless initial_state is given.
LwistaOut lwista(const Tensor& rain_feat, const ModelParams& m,
                 const Tensor* initial_state = nullptr);

/// Rain layer from a code: e4 (*) relu(e3 (*) code).
Tensor reconstruct_rain(const Tensor& code, const ModelParams& m);

DerainResult derain(const Tensor& y, const ModelParams& m);

struct MlwistaOut {
  std::array<Tensor, 3> codes;
  std::array<WeightVector, 3> wtilde;
};

/// Joint multiscale solver: every iteration updates all three codes against
/// the shared residual.
MlwistaOut mlwista(const Tensor& rain_feat, const MsModelParams& m);

/// Rain layer from multiscale codes: e4 (*) relu(sum_j s_j (*) code_j).
Tensor reconstruct_rain(const std::array<Tensor, 3>& codes, const MsModelParams& m);

DerainResult derain_multiscale(const Tensor& y, const MsModelParams& m);

// ---------------------------------------------------------------------------
// Named views over every learnable tensor, in canonical container order.

struct TensorRef {
  std::string name;
  std::vector<double>* data;
  std::vector<int> shape;
  bool clamp_nonneg = false;  // thresholds stay >= 0
};

std::vector<TensorRef> tensor_refs(ModelParams& m);
std::vector<TensorRef> tensor_refs(MsModelParams& m);

// ---------------------------------------------------------------------------
// Traced forward passes. They record every intermediate the reverse pass
// needs; inference paths above keep only the running state.

struct ActTrace {
  LwbTrace wtilde;  // populated when rw is on
  Tensor gated;     // gate output fed to the threshold (== input when rw off)
  Tensor pre_relu;
  Tensor post_relu;
  LwbTrace w;
  Tensor out;
};

struct ExtractTrace {
  Tensor a1, h1, a2, r_eps;
};

struct ReconTrace {
  Tensor pre, post, head;
};

struct IterTrace {
  Tensor v;  // pa on: act input of this iteration
  ActTrace act;
};

struct LwistaTrace {
  Tensor g_r;                 // input injection, computed once
  std::vector<Tensor> state;  // 0..T; codes when pa is on, pre-activation states otherwise
  std::vector<IterTrace> iter;
};

struct ForwardTrace {
  ExtractTrace extract;
  LwistaTrace lwista;
  ReconTrace recon;
  Tensor x, r;
  WeightVector wtilde_final;
  double rde_value = 0.0;
};

struct MsIterTrace {
  Tensor resid;
  std::array<Tensor, 3> v;
  std::array<ActTrace, 3> act;
};

struct MsLwistaTrace {
  std::vector<std::array<Tensor, 3>> state;  // 0..T
  std::vector<MsIterTrace> iter;
};

struct MsForwardTrace {
  ExtractTrace extract;
  MsLwistaTrace lwista;
  ReconTrace recon;
  Tensor x, r;
  std::array<WeightVector, 3> wtilde_final;
  double rde_value = 0.0;
};

void forward_traced(const Tensor& y, const ModelParams& m, ForwardTrace& trace);
void forward_traced(const Tensor& y, const MsModelParams& m, MsForwardTrace& trace);

// Activation block act(v) = lwb_w(relu(lwb_wtilde(v) - theta)); gates drop to
// identity when rw is off. Shared by both architectures.
Tensor act_block(const Tensor& v, const LwbParams& lwb_wt, const LwbParams& lwb_w,
                 const std::vector<double>& theta, bool rw, ActTrace* trace);

}  // namespace coderain
