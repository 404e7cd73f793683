#include "coderain/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace coderain {

double TrainConfig::lr_at(int step) const {
  double value = lr;
  for (int milestone : lr_milestones)
    if (step >= milestone) value *= 0.5;
  return value;
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ParamError("TrainConfig: lr must be positive");
  if (batch_size < 1) throw ParamError("TrainConfig: batch_size must be >= 1");
  if (steps < 0) throw ParamError("TrainConfig: steps must be nonnegative");
  if (patch_size < 1) throw ParamError("TrainConfig: patch_size must be >= 1");
  for (std::size_t i = 1; i < lr_milestones.size(); ++i)
    if (lr_milestones[i] <= lr_milestones[i - 1])
      throw ParamError("TrainConfig: lr milestones must be strictly increasing");
}

void GradientSet::add_scaled(const GradientSet& other, double factor) {
  for (std::size_t i = 0; i < slots.size(); ++i)
    for (std::size_t j = 0; j < slots[i].size(); ++j) slots[i][j] += factor * other.slots[i][j];
}

void GradientSet::scale_all(double factor) {
  for (auto& slot : slots)
    for (double& v : slot) v *= factor;
}

GradientSet make_gradients(const std::vector<TensorRef>& refs) {
  GradientSet g;
  g.slots.reserve(refs.size());
  for (const auto& ref : refs) g.slots.emplace_back(ref.data->size(), 0.0);
  return g;
}

double loss_l1(const Tensor& pred, const Tensor& gt) {
  check_same_shape(pred, gt, "loss_l1");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.data[i] - gt.data[i]);
  return acc / static_cast<double>(pred.size());
}

namespace {

// Slot indices matching tensor_refs order; checked by tests.
namespace slot {
constexpr int e1 = 0, e2 = 1, g = 2, s = 3, e3 = 4, e4 = 5;
constexpr int lwb_w_fc1 = 6, lwb_w_fc2 = 7, lwb_wt_fc1 = 8, lwb_wt_fc2 = 9, theta = 10;

constexpr int ms_e1 = 0, ms_e2 = 1, ms_e4 = 2;
constexpr int ms_scale_base = 3, ms_scale_stride = 6;
constexpr int ms_g = 0, ms_s = 1, ms_w_fc1 = 2, ms_w_fc2 = 3, ms_wt_fc1 = 4, ms_wt_fc2 = 5;
inline int ms_scale(int j, int which) { return ms_scale_base + j * ms_scale_stride + which; }
inline int ms_theta(int j, int t, int T) { return ms_scale_base + 3 * ms_scale_stride + j * T + t; }
}  // namespace slot

void check_finite_stage(const Tensor& t, const char* name) {
  if (!all_finite(t)) throw TrainError(std::string("non-finite values in ") + name);
}

Tensor loss_l1_grad(const Tensor& pred, const Tensor& gt) {
  Tensor d(pred.channels, pred.height, pred.width);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred.data[i] - gt.data[i];
    d.data[i] = diff > 0.0 ? inv_n : (diff < 0.0 ? -inv_n : 0.0);
  }
  return d;
}

Tensor relu_mask_mul(const Tensor& d, const Tensor& pre) {
  Tensor out(d.channels, d.height, d.width);
  for (std::size_t i = 0; i < d.size(); ++i) out.data[i] = pre.data[i] > 0.0 ? d.data[i] : 0.0;
  return out;
}

// Reverse pass of one gate application. alpha is the gate input recorded in
// the forward pass; returns d(loss)/d(alpha) and accumulates fc gradients.
Tensor lwb_backward(const Tensor& alpha, const LwbParams& p, const LwbTrace& tr,
                    const Tensor& dout, std::vector<double>& dfc1, std::vector<double>& dfc2) {
  const int c = p.channels, hid = p.hidden;
  const std::size_t hw = alpha.plane();
  Tensor dalpha(alpha.channels, alpha.height, alpha.width);
  std::vector<double> dgate(c, 0.0);
  for (int i = 0; i < c; ++i) {
    const double* d_row = dout.channel(i);
    const double* a_row = alpha.channel(i);
    double* out_row = dalpha.channel(i);
    const double gate = tr.gate.values[i];
    double acc = 0.0;
    for (std::size_t k = 0; k < hw; ++k) {
      acc += d_row[k] * a_row[k];
      out_row[k] = d_row[k] * gate;
    }
    dgate[i] = acc;
  }
  std::vector<double> dlogit(c, 0.0);
  for (int i = 0; i < c; ++i)
    dlogit[i] = dgate[i] * tr.gate.values[i] * (1.0 - tr.gate.values[i]);
  std::vector<double> dhid(hid, 0.0);
  for (int i = 0; i < c; ++i) {
    const double* row = p.fc2.data() + static_cast<std::size_t>(i) * hid;
    for (int j = 0; j < hid; ++j) {
      dfc2[static_cast<std::size_t>(i) * hid + j] += dlogit[i] * tr.hidden[j];
      dhid[j] += row[j] * dlogit[i];
    }
  }
  std::vector<double> dpool(c, 0.0);
  for (int j = 0; j < hid; ++j) {
    const double dh = tr.hidden_pre[j] > 0.0 ? dhid[j] : 0.0;
    const double* row = p.fc1.data() + static_cast<std::size_t>(j) * c;
    for (int k = 0; k < c; ++k) {
      dfc1[static_cast<std::size_t>(j) * c + k] += dh * tr.pooled[k];
      dpool[k] += row[k] * dh;
    }
  }
  const double inv_hw = 1.0 / static_cast<double>(hw);
  for (int i = 0; i < c; ++i) {
    double* out_row = dalpha.channel(i);
    const double dp = dpool[i] * inv_hw;
    for (std::size_t k = 0; k < hw; ++k) out_row[k] += dp;
  }
  return dalpha;
}

// Reverse pass of act_block. dtheta accumulates per channel; the four fc
// gradient buffers may alias model-level slots.
Tensor act_backward(const Tensor& input, const ActTrace& tr, const LwbParams& lwb_wt,
                    const LwbParams& lwb_w, bool rw, const Tensor& dout, double* dtheta,
                    std::vector<double>& dfc1_w, std::vector<double>& dfc2_w,
                    std::vector<double>& dfc1_wt, std::vector<double>& dfc2_wt) {
  Tensor dpost = rw ? lwb_backward(tr.post_relu, lwb_w, tr.w, dout, dfc1_w, dfc2_w) : dout;
  Tensor dpre = relu_mask_mul(dpost, tr.pre_relu);
  const std::size_t hw = dpre.plane();
  for (int c = 0; c < dpre.channels; ++c) {
    const double* row = dpre.channel(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += row[i];
    dtheta[c] -= acc;
  }
  if (rw) return lwb_backward(input, lwb_wt, tr.wtilde, dpre, dfc1_wt, dfc2_wt);
  return dpre;
}

void extract_backward(const Tensor& y, const ExtractTrace& tr, const KernelBank& e1,
                      const KernelBank& e2, const Tensor& dreps, std::vector<double>& de1,
                      std::vector<double>& de2) {
  Tensor da2 = relu_mask_mul(dreps, tr.a2);
  conv2d_kernel_grad_accum(tr.h1, da2, e2.kernel_size, de2);
  Tensor dh1 = conv2d_adjoint(da2, e2);
  Tensor da1 = relu_mask_mul(dh1, tr.a1);
  conv2d_kernel_grad_accum(y, da1, e1.kernel_size, de1);
}

}  // namespace

BackwardResult backward(const ModelParams& m, const Tensor& y, const Tensor& gt,
                        std::vector<std::vector<double>>* per_iter_s_grads) {
  ForwardTrace tr;
  forward_traced(y, m, tr);
  check_finite_stage(tr.extract.r_eps, "rain features");
  check_finite_stage(tr.lwista.state.back(), "sparse code");
  check_finite_stage(tr.recon.head, "reconstruction head");

  BackwardResult result;
  result.loss = loss_l1(tr.x, gt);
  auto refs = tensor_refs(const_cast<ModelParams&>(m));  // shapes only
  result.grads = make_gradients(refs);
  auto& gr = result.grads.slots;
  if (per_iter_s_grads) per_iter_s_grads->assign(m.T, std::vector<double>(m.s.size(), 0.0));

  Tensor dx = loss_l1_grad(tr.x, gt);
  Tensor dhead = m.toggles.grl ? scale(dx, -1.0) : std::move(dx);

  // reconstruction head
  conv2d_kernel_grad_accum(tr.recon.post, dhead, m.e4.kernel_size, gr[slot::e4]);
  Tensor dpost = conv2d_adjoint(dhead, m.e4);
  Tensor dpre = relu_mask_mul(dpost, tr.recon.pre);
  conv2d_kernel_grad_accum(tr.lwista.state.back(), dpre, m.e3.kernel_size, gr[slot::e3]);
  Tensor dstate = conv2d_adjoint(dpre, m.e3);

  // unfolded iterations
  Tensor dgr(m.c, y.height, y.width);
  for (int t = m.T - 1; t >= 0; --t) {
    const bool inject = m.toggles.lrl || t == 0;
    const IterTrace& it = tr.lwista.iter[t];
    if (m.toggles.pa) {
      Tensor dv = act_backward(it.v, it.act, m.lwb_wtilde, m.lwb_w, m.toggles.rw, dstate,
                               gr[slot::theta].data(), gr[slot::lwb_w_fc1], gr[slot::lwb_w_fc2],
                               gr[slot::lwb_wt_fc1], gr[slot::lwb_wt_fc2]);
      conv2d_kernel_grad_accum(tr.lwista.state[t], dv, m.s.kernel_size, gr[slot::s]);
      if (per_iter_s_grads)
        conv2d_kernel_grad_accum(tr.lwista.state[t], dv, m.s.kernel_size, (*per_iter_s_grads)[t]);
      if (inject)
        for (std::size_t i = 0; i < dgr.size(); ++i) dgr.data[i] += dv.data[i];
      dstate = conv2d_adjoint(dv, m.s);
    } else {
      conv2d_kernel_grad_accum(it.act.out, dstate, m.s.kernel_size, gr[slot::s]);
      if (per_iter_s_grads)
        conv2d_kernel_grad_accum(it.act.out, dstate, m.s.kernel_size, (*per_iter_s_grads)[t]);
      Tensor da = conv2d_adjoint(dstate, m.s);
      if (inject)
        for (std::size_t i = 0; i < dgr.size(); ++i) dgr.data[i] += dstate.data[i];
      dstate = act_backward(tr.lwista.state[t], it.act, m.lwb_wtilde, m.lwb_w, m.toggles.rw, da,
                            gr[slot::theta].data(), gr[slot::lwb_w_fc1], gr[slot::lwb_w_fc2],
                            gr[slot::lwb_wt_fc1], gr[slot::lwb_wt_fc2]);
    }
  }

  // input injection and extractor
  conv2d_kernel_grad_accum(tr.extract.r_eps, dgr, m.g.kernel_size, gr[slot::g]);
  Tensor dreps = conv2d_adjoint(dgr, m.g);
  extract_backward(y, tr.extract, m.e1, m.e2, dreps, gr[slot::e1], gr[slot::e2]);
  return result;
}

BackwardResult backward(const MsModelParams& m, const Tensor& y, const Tensor& gt) {
  MsForwardTrace tr;
  forward_traced(y, m, tr);
  check_finite_stage(tr.extract.r_eps, "rain features");
  for (int j = 0; j < 3; ++j) check_finite_stage(tr.lwista.state.back()[j], "sparse code");
  check_finite_stage(tr.recon.head, "reconstruction head");

  BackwardResult result;
  result.loss = loss_l1(tr.x, gt);
  auto refs = tensor_refs(const_cast<MsModelParams&>(m));  // shapes only
  result.grads = make_gradients(refs);
  auto& gr = result.grads.slots;
  const int T = m.T;

  Tensor dx = loss_l1_grad(tr.x, gt);
  Tensor dhead = m.toggles.grl ? scale(dx, -1.0) : std::move(dx);

  // reconstruction head reuses the per-scale synthesis banks
  conv2d_kernel_grad_accum(tr.recon.post, dhead, m.e4.kernel_size, gr[slot::ms_e4]);
  Tensor dpost = conv2d_adjoint(dhead, m.e4);
  Tensor dpre = relu_mask_mul(dpost, tr.recon.pre);
  std::array<Tensor, 3> dstate;
  for (int j = 0; j < 3; ++j) {
    conv2d_kernel_grad_accum(tr.lwista.state.back()[j], dpre, m.s[j].kernel_size,
                             gr[slot::ms_scale(j, slot::ms_s)]);
    dstate[j] = conv2d_adjoint(dpre, m.s[j]);
  }

  Tensor dreps(m.p, y.height, y.width);
  for (int t = T - 1; t >= 0; --t) {
    const MsIterTrace& it = tr.lwista.iter[t];
    if (m.toggles.pa) {
      Tensor dresid(m.p, y.height, y.width);
      std::array<Tensor, 3> dnext;
      for (int j = 0; j < 3; ++j) {
        Tensor dv = act_backward(it.v[j], it.act[j], m.lwb_wtilde[j], m.lwb_w[j], m.toggles.rw,
                                 dstate[j], gr[slot::ms_theta(j, t, T)].data(),
                                 gr[slot::ms_scale(j, slot::ms_w_fc1)],
                                 gr[slot::ms_scale(j, slot::ms_w_fc2)],
                                 gr[slot::ms_scale(j, slot::ms_wt_fc1)],
                                 gr[slot::ms_scale(j, slot::ms_wt_fc2)]);
        conv2d_kernel_grad_accum(it.resid, dv, m.g[j].kernel_size,
                                 gr[slot::ms_scale(j, slot::ms_g)]);
        Tensor dr = conv2d_adjoint(dv, m.g[j]);
        for (std::size_t i = 0; i < dresid.size(); ++i) dresid.data[i] += dr.data[i];
        dnext[j] = m.toggles.lrl ? std::move(dv) : Tensor(m.c, y.height, y.width);
      }
      for (std::size_t i = 0; i < dresid.size(); ++i) dreps.data[i] += dresid.data[i];
      const Tensor neg = scale(dresid, -1.0);
      for (int j = 0; j < 3; ++j) {
        conv2d_kernel_grad_accum(tr.lwista.state[t][j], neg, m.s[j].kernel_size,
                                 gr[slot::ms_scale(j, slot::ms_s)]);
        Tensor ds = conv2d_adjoint(neg, m.s[j]);
        for (std::size_t i = 0; i < ds.size(); ++i) dnext[j].data[i] += ds.data[i];
      }
      dstate = std::move(dnext);
    } else {
      Tensor dresid(m.p, y.height, y.width);
      std::array<Tensor, 3> dact;
      for (int j = 0; j < 3; ++j) {
        conv2d_kernel_grad_accum(it.resid, dstate[j], m.g[j].kernel_size,
                                 gr[slot::ms_scale(j, slot::ms_g)]);
        Tensor dr = conv2d_adjoint(dstate[j], m.g[j]);
        for (std::size_t i = 0; i < dresid.size(); ++i) dresid.data[i] += dr.data[i];
        dact[j] = m.toggles.lrl ? dstate[j] : Tensor(m.c, y.height, y.width);
      }
      for (std::size_t i = 0; i < dresid.size(); ++i) dreps.data[i] += dresid.data[i];
      const Tensor neg = scale(dresid, -1.0);
      for (int j = 0; j < 3; ++j) {
        conv2d_kernel_grad_accum(it.act[j].out, neg, m.s[j].kernel_size,
                                 gr[slot::ms_scale(j, slot::ms_s)]);
        Tensor ds = conv2d_adjoint(neg, m.s[j]);
        for (std::size_t i = 0; i < ds.size(); ++i) dact[j].data[i] += ds.data[i];
      }
      for (int j = 0; j < 3; ++j)
        dstate[j] = act_backward(tr.lwista.state[t][j], it.act[j], m.lwb_wtilde[j], m.lwb_w[j],
                                 m.toggles.rw, dact[j], gr[slot::ms_theta(j, t, T)].data(),
                                 gr[slot::ms_scale(j, slot::ms_w_fc1)],
                                 gr[slot::ms_scale(j, slot::ms_w_fc2)],
                                 gr[slot::ms_scale(j, slot::ms_wt_fc1)],
                                 gr[slot::ms_scale(j, slot::ms_wt_fc2)]);
    }
  }
  extract_backward(y, tr.extract, m.e1, m.e2, dreps, gr[slot::ms_e1], gr[slot::ms_e2]);
  return result;
}

namespace {

// Sign pattern of every kinked site in the pipeline; coordinates whose
// perturbation changes this pattern sit too close to a kink for central
// differences.
void collect_mask(const ActTrace& act, bool rw, std::vector<char>& mask) {
  if (rw)
    for (double v : act.wtilde.hidden_pre) mask.push_back(v > 0.0);
  for (double v : act.pre_relu.data) mask.push_back(v > 0.0);
  if (rw)
    for (double v : act.w.hidden_pre) mask.push_back(v > 0.0);
}

void collect_common(const ExtractTrace& ex, const ReconTrace& rc, const Tensor& x,
                    const Tensor& gt, std::vector<char>& mask) {
  for (double v : ex.a1.data) mask.push_back(v > 0.0);
  for (double v : ex.a2.data) mask.push_back(v > 0.0);
  for (double v : rc.pre.data) mask.push_back(v > 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.data[i] - gt.data[i];
    mask.push_back(d > 0.0 ? 1 : (d < 0.0 ? -1 : 0));
  }
}

double eval_masked(const ModelParams& m, const Tensor& y, const Tensor& gt,
                   std::vector<char>* mask) {
  ForwardTrace tr;
  forward_traced(y, m, tr);
  if (mask) {
    mask->clear();
    for (const auto& it : tr.lwista.iter) collect_mask(it.act, m.toggles.rw, *mask);
    collect_common(tr.extract, tr.recon, tr.x, gt, *mask);
  }
  return loss_l1(tr.x, gt);
}

double eval_masked(const MsModelParams& m, const Tensor& y, const Tensor& gt,
                   std::vector<char>* mask) {
  MsForwardTrace tr;
  forward_traced(y, m, tr);
  if (mask) {
    mask->clear();
    for (const auto& it : tr.lwista.iter)
      for (int j = 0; j < 3; ++j) collect_mask(it.act[j], m.toggles.rw, *mask);
    collect_common(tr.extract, tr.recon, tr.x, gt, *mask);
  }
  return loss_l1(tr.x, gt);
}

template <typename Model>
double finite_diff_check_impl(const Model& m_in, const Tensor& y, const Tensor& gt, double eps) {
  Model m = m_in;
  const BackwardResult analytic = backward(m, y, gt);
  auto refs = tensor_refs(m);
  GradientSet numeric = make_gradients(refs);
  std::vector<std::vector<char>> skip(refs.size());
  std::vector<char> mask_lo, mask_hi;
  for (std::size_t slot_i = 0; slot_i < refs.size(); ++slot_i) {
    auto& data = *refs[slot_i].data;
    skip[slot_i].assign(data.size(), 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + 10.0 * eps;
      eval_masked(m, y, gt, &mask_hi);
      data[i] = orig - 10.0 * eps;
      eval_masked(m, y, gt, &mask_lo);
      if (mask_hi != mask_lo) {
        skip[slot_i][i] = 1;
        data[i] = orig;
        continue;
      }
      data[i] = orig + eps;
      const double hi = eval_masked(m, y, gt, nullptr);
      data[i] = orig - eps;
      const double lo = eval_masked(m, y, gt, nullptr);
      data[i] = orig;
      numeric.slots[slot_i][i] = (hi - lo) / (2.0 * eps);
    }
  }
  return compare_gradients(analytic.grads, numeric, skip);
}

}  // namespace

double compare_gradients(const GradientSet& analytic, const GradientSet& numeric,
                         const std::vector<std::vector<char>>& skip) {
  double worst = 0.0;
  for (std::size_t s = 0; s < analytic.slots.size(); ++s) {
    for (std::size_t i = 0; i < analytic.slots[s].size(); ++i) {
      if (!skip.empty() && skip[s][i]) continue;
      const double a = analytic.slots[s][i];
      const double n = numeric.slots[s][i];
      const double err = std::abs(a - n) / (std::abs(a) + std::abs(n) + 1e-12);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double finite_diff_check(const ModelParams& m, const Tensor& y, const Tensor& gt, double eps) {
  return finite_diff_check_impl(m, y, gt, eps);
}

double finite_diff_check(const MsModelParams& m, const Tensor& y, const Tensor& gt, double eps) {
  return finite_diff_check_impl(m, y, gt, eps);
}

AdamState make_adam_state(const std::vector<TensorRef>& refs) {
  AdamState st;
  st.m.reserve(refs.size());
  st.v.reserve(refs.size());
  for (const auto& ref : refs) {
    st.m.emplace_back(ref.data->size(), 0.0);
    st.v.emplace_back(ref.data->size(), 0.0);
  }
  return st;
}

void adam_step(const std::vector<TensorRef>& refs, const GradientSet& grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
  for (std::size_t s = 0; s < refs.size(); ++s)
    for (double g : grads.slots[s])
      if (!std::isfinite(g))
        throw TrainError("adam_step refused: non-finite gradient in " + refs[s].name);

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t s = 0; s < refs.size(); ++s) {
    auto& p = *refs[s].data;
    auto& m = state.m[s];
    auto& v = state.v[s];
    const auto& g = grads.slots[s];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    if (refs[s].clamp_nonneg)
      for (double& x : p) x = std::max(x, 0.0);
  }
}

namespace {

void he_fill(std::vector<double>& data, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : data) v = dist(rng);
}

void fc_fill(std::vector<double>& data, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : data) v = dist(rng);
}

constexpr double kThetaInit = 0.01;

}  // namespace

void init_model(ModelParams& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto he_bank = [&](KernelBank& k) {
    he_fill(k.data, k.in_channels * k.kernel_size * k.kernel_size, rng);
  };
  he_bank(m.e1);
  he_bank(m.e2);
  he_bank(m.g);
  he_bank(m.s);
  he_bank(m.e3);
  he_bank(m.e4);
  fc_fill(m.lwb_w.fc1, m.c, rng);
  fc_fill(m.lwb_w.fc2, m.lwb_w.hidden, rng);
  fc_fill(m.lwb_wtilde.fc1, m.c, rng);
  fc_fill(m.lwb_wtilde.fc2, m.lwb_wtilde.hidden, rng);
  std::fill(m.theta.begin(), m.theta.end(), kThetaInit);
}

void init_model(MsModelParams& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto he_bank = [&](KernelBank& k) {
    he_fill(k.data, k.in_channels * k.kernel_size * k.kernel_size, rng);
  };
  he_bank(m.e1);
  he_bank(m.e2);
  he_bank(m.e4);
  for (int j = 0; j < 3; ++j) {
    he_bank(m.g[j]);
    he_bank(m.s[j]);
    fc_fill(m.lwb_w[j].fc1, m.c, rng);
    fc_fill(m.lwb_w[j].fc2, m.lwb_w[j].hidden, rng);
    fc_fill(m.lwb_wtilde[j].fc1, m.c, rng);
    fc_fill(m.lwb_wtilde[j].fc2, m.lwb_wtilde[j].hidden, rng);
  }
  for (auto& per_iter : m.theta)
    for (auto& v : per_iter) std::fill(v.begin(), v.end(), kThetaInit);
}

namespace {

Tensor crop(const Tensor& t, int y0, int x0, int size) {
  Tensor out(t.channels, size, size);
  for (int c = 0; c < t.channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = t.at(c, y0 + y, x0 + x);
  return out;
}

Tensor hflip(const Tensor& t) {
  Tensor out(t.channels, t.height, t.width);
  for (int c = 0; c < t.channels; ++c)
    for (int y = 0; y < t.height; ++y)
      for (int x = 0; x < t.width; ++x) out.at(c, y, x) = t.at(c, y, t.width - 1 - x);
  return out;
}

Tensor rot90(const Tensor& t, int quarter_turns) {
  Tensor cur = t;
  for (int k = 0; k < (quarter_turns & 3); ++k) {
    Tensor next(cur.channels, cur.width, cur.height);
    for (int c = 0; c < cur.channels; ++c)
      for (int y = 0; y < cur.height; ++y)
        for (int x = 0; x < cur.width; ++x) next.at(c, cur.width - 1 - x, y) = cur.at(c, y, x);
    cur = std::move(next);
  }
  return cur;
}

template <typename Model>
double validation_loss_impl(const Model& m, const std::vector<ImagePair>& pairs) {
  if (pairs.empty()) throw TrainError("validation_loss: empty pair list");
  double acc = 0.0;
  for (const auto& pair : pairs) {
    DerainResult res;
    if constexpr (std::is_same_v<Model, ModelParams>)
      res = derain(pair.rainy, m);
    else
      res = derain_multiscale(pair.rainy, m);
    acc += loss_l1(res.x, pair.clean);
  }
  return acc / static_cast<double>(pairs.size());
}

template <typename Model>
void train_stage_impl(Model& m, const std::vector<ImagePair>& train, const TrainConfig& cfg,
                      const std::string& stage_name, const LogSink& log) {
  cfg.validate();
  if (train.empty()) throw TrainError("train_stage: empty corpus");
  for (const auto& pair : train)
    if (pair.rainy.height < cfg.patch_size || pair.rainy.width < cfg.patch_size)
      throw TrainError("train_stage: image smaller than patch size");

  std::mt19937_64 rng(cfg.seed);
  auto refs = tensor_refs(m);
  AdamState adam = make_adam_state(refs);
  for (int step = 0; step < cfg.steps; ++step) {
    GradientSet batch_grads = make_gradients(refs);
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& pair = train[std::uniform_int_distribution<std::size_t>(
          0, train.size() - 1)(rng)];
      const int y0 = std::uniform_int_distribution<int>(
          0, pair.rainy.height - cfg.patch_size)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, pair.rainy.width - cfg.patch_size)(rng);
      const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
      const int turns = std::uniform_int_distribution<int>(0, 3)(rng);

      Tensor rainy = crop(pair.rainy, y0, x0, cfg.patch_size);
      Tensor clean = crop(pair.clean, y0, x0, cfg.patch_size);
      if (flip) {
        rainy = hflip(rainy);
        clean = hflip(clean);
      }
      if (turns) {
        rainy = rot90(rainy, turns);
        clean = rot90(clean, turns);
      }
      BackwardResult res = backward(m, rainy, clean);
      batch_loss += res.loss;
      batch_grads.add_scaled(res.grads, 1.0);
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    batch_grads.scale_all(inv_b);
    batch_loss *= inv_b;
    if (!std::isfinite(batch_loss)) throw TrainError("train_stage: non-finite batch loss");

    const double lr = cfg.lr_at(step);
    adam_step(refs, batch_grads, adam, lr, cfg);
    if (log) log({step, stage_name, lr, batch_loss});
  }
}

// With both gate output layers zeroed every gate evaluates to exactly 0.5,
// so an activation block computes 0.5*relu(0.5*v - theta). Halving the
// thresholds and scaling the code-consuming banks by 4 makes the gated
// single-scale network identical to the plain one at stage-2 entry; the
// multiscale iteration has a bare skip term that cannot absorb the scale,
// so it only gets the neutral gate init.
void gate_warmup_rescale(ModelParams& m) {
  std::fill(m.lwb_w.fc2.begin(), m.lwb_w.fc2.end(), 0.0);
  std::fill(m.lwb_wtilde.fc2.begin(), m.lwb_wtilde.fc2.end(), 0.0);
  for (double& v : m.s.data) v *= 4.0;
  for (double& v : m.e3.data) v *= 4.0;
  for (double& t : m.theta) t *= 0.5;
}

void gate_warmup_rescale(MsModelParams& m) {
  for (int j = 0; j < 3; ++j) {
    std::fill(m.lwb_w[j].fc2.begin(), m.lwb_w[j].fc2.end(), 0.0);
    std::fill(m.lwb_wtilde[j].fc2.begin(), m.lwb_wtilde[j].fc2.end(), 0.0);
  }
}

template <typename Model>
TwoStageResult<Model> train_two_stage_impl(const Model& init, const std::vector<ImagePair>& train,
                                           const std::vector<ImagePair>& val,
                                           const TwoStageConfig& cfg, const LogSink& log) {
  if (train.empty()) throw TrainError("train_two_stage: empty corpus");
  TwoStageResult<Model> result;
  Model plain = init;
  plain.toggles.rw = false;
  train_stage(plain, train, cfg.stage1, "plain", log);
  result.stage1_model = plain;
  result.stage1_val_loss = val.empty() ? 0.0 : validation_loss(plain, val);

  Model tuned = plain;
  tuned.toggles.rw = init.toggles.rw;
  if (tuned.toggles.rw && cfg.gate_warmup) gate_warmup_rescale(tuned);
  train_stage(tuned, train, cfg.stage2, "finetune", log);
  result.stage2_model = std::move(tuned);
  result.stage2_val_loss = val.empty() ? 0.0 : validation_loss(result.stage2_model, val);
  return result;
}

}  // namespace

double validation_loss(const ModelParams& m, const std::vector<ImagePair>& pairs) {
  return validation_loss_impl(m, pairs);
}

double validation_loss(const MsModelParams& m, const std::vector<ImagePair>& pairs) {
  return validation_loss_impl(m, pairs);
}

void train_stage(ModelParams& m, const std::vector<ImagePair>& train, const TrainConfig& cfg,
                 const std::string& stage_name, const LogSink& log) {
  train_stage_impl(m, train, cfg, stage_name, log);
}

void train_stage(MsModelParams& m, const std::vector<ImagePair>& train, const TrainConfig& cfg,
                 const std::string& stage_name, const LogSink& log) {
  train_stage_impl(m, train, cfg, stage_name, log);
}

TwoStageResult<ModelParams> train_two_stage(const ModelParams& init,
                                            const std::vector<ImagePair>& train,
                                            const std::vector<ImagePair>& val,
                                            const TwoStageConfig& cfg, const LogSink& log) {
  return train_two_stage_impl(init, train, val, cfg, log);
}

TwoStageResult<MsModelParams> train_two_stage(const MsModelParams& init,
                                              const std::vector<ImagePair>& train,
                                              const std::vector<ImagePair>& val,
                                              const TwoStageConfig& cfg, const LogSink& log) {
  return train_two_stage_impl(init, train, val, cfg, log);
}

}  // namespace coderain
