#include "coderain/model.hpp"

#include <cmath>
#include <utility>

namespace coderain {

ModelParams::ModelParams(int p_, int c_, int ksize_, int T_, int rho_, Toggles toggles_)
    : p(p_),
      c(c_),
      ksize(ksize_),
      T(T_),
      rho(rho_),
      toggles(toggles_),
      e1(p_, 3, ksize_),
      e2(p_, p_, ksize_),
      g(c_, p_, ksize_),
      s(c_, c_, ksize_),
      e3(p_, c_, ksize_),
      e4(3, p_, ksize_),
      lwb_w(c_, rho_),
      lwb_wtilde(c_, rho_),
      theta(c_, 0.0) {
  if (T < 1) throw ParamError("ModelParams: iteration count must be >= 1");
}

MsModelParams::MsModelParams(int p_, int c_, std::array<int, 3> sizes, int T_, int rho_,
                             Toggles toggles_)
    : p(p_), c(c_), T(T_), rho(rho_), scale_sizes(sizes), toggles(toggles_) {
  if (T < 1) throw ParamError("MsModelParams: iteration count must be >= 1");
  if (!(sizes[0] < sizes[1] && sizes[1] < sizes[2]))
    throw ParamError("MsModelParams: scale kernel sizes must be strictly increasing");
  e1 = KernelBank(p, 3, sizes[0]);
  e2 = KernelBank(p, p, sizes[0]);
  e4 = KernelBank(3, p, sizes[0]);
  for (int j = 0; j < 3; ++j) {
    g[j] = KernelBank(c, p, sizes[j]);
    s[j] = KernelBank(p, c, sizes[j]);
    lwb_w[j] = LwbParams(c, rho_);
    lwb_wtilde[j] = LwbParams(c, rho_);
  }
  theta.assign(T, {});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < 3; ++j) theta[t][j].assign(c, 0.0);
}

ModelParams default_code_model() { return ModelParams(128, 256, 3, 25, 16); }

MsModelParams default_mcode_model() { return MsModelParams(48, 96, {3, 5, 7}, 25, 16); }

namespace {

Tensor extract_impl(const Tensor& y, const KernelBank& e1, const KernelBank& e2,
                    ExtractTrace* trace) {
  if (y.channels != 3) throw ShapeError("extract_rain: input must be 3-channel RGB");
  Tensor a1 = conv2d(y, e1);
  Tensor h1 = activation(ActivationKind::relu, a1);
  Tensor a2 = conv2d(h1, e2);
  Tensor r_eps = activation(ActivationKind::relu, a2);
  if (trace) {
    trace->a1 = std::move(a1);
    trace->h1 = std::move(h1);
    trace->a2 = std::move(a2);
    trace->r_eps = r_eps;
  }
  return r_eps;
}

WeightVector ones_gate(int c) {
  WeightVector w;
  w.values.assign(c, 1.0);
  return w;
}

}  // namespace

Tensor act_block(const Tensor& v, const LwbParams& lwb_wt, const LwbParams& lwb_w,
                 const std::vector<double>& theta, bool rw, ActTrace* trace) {
  const std::size_t hw = v.plane();
  Tensor gated;
  if (rw) {
    LwbResult res = lwb_forward(v, lwb_wt, trace ? &trace->wtilde : nullptr);
    gated = std::move(res.gated);
  } else {
    gated = v;
  }
  Tensor pre(v.channels, v.height, v.width);
  for (int c = 0; c < v.channels; ++c) {
    const double t = theta[c];
    const double* src = gated.channel(c);
    double* dst = pre.channel(c);
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] - t;
  }
  Tensor post = activation(ActivationKind::relu, pre);
  Tensor out;
  if (rw) {
    LwbResult res = lwb_forward(post, lwb_w, trace ? &trace->w : nullptr);
    out = std::move(res.gated);
  } else {
    out = post;
  }
  if (trace) {
    trace->gated = std::move(gated);
    trace->pre_relu = std::move(pre);
    trace->post_relu = std::move(post);
    trace->out = out;
  }
  return out;
}

Tensor extract_rain(const Tensor& y, const ModelParams& m) {
  return extract_impl(y, m.e1, m.e2, nullptr);
}

Tensor extract_rain(const Tensor& y, const MsModelParams& m) {
  return extract_impl(y, m.e1, m.e2, nullptr);
}

namespace {

// Single-scale unfolded loop. With pa on, the running state is the code and
// the activation closes each iteration; with pa off the state is the
// pre-activation signal and the weight layer closes it.
Tensor lwista_loop(const Tensor& g_r, const ModelParams& m, const Tensor* initial_state,
                   WeightVector& wtilde_out, LwistaTrace* trace) {
  Tensor state = initial_state ? *initial_state : Tensor(m.c, g_r.height, g_r.width);
  wtilde_out = ones_gate(m.c);
  if (trace) {
    trace->g_r = g_r;
    trace->state.clear();
    trace->iter.clear();
    trace->state.push_back(state);
  }
  for (int t = 0; t < m.T; ++t) {
    const bool inject = m.toggles.lrl || t == 0;
    ActTrace* act_trace = nullptr;
    if (trace) {
      trace->iter.emplace_back();
      act_trace = &trace->iter.back().act;
    }
    if (m.toggles.pa) {
      Tensor v = conv2d(state, m.s);
      if (inject)
        for (std::size_t i = 0; i < v.size(); ++i) v.data[i] += g_r.data[i];
      Tensor next = act_block(v, m.lwb_wtilde, m.lwb_w, m.theta, m.toggles.rw, act_trace);
      if (m.toggles.rw && t == m.T - 1)
        wtilde_out = act_trace ? act_trace->wtilde.gate
                               : lwb_forward(v, m.lwb_wtilde).weights;
      if (trace) trace->iter.back().v = std::move(v);
      state = std::move(next);
    } else {
      Tensor a = act_block(state, m.lwb_wtilde, m.lwb_w, m.theta, m.toggles.rw, act_trace);
      if (m.toggles.rw && t == m.T - 1)
        wtilde_out = act_trace ? act_trace->wtilde.gate
                               : lwb_forward(state, m.lwb_wtilde).weights;
      Tensor next = conv2d(a, m.s);
      if (inject)
        for (std::size_t i = 0; i < next.size(); ++i) next.data[i] += g_r.data[i];
      state = std::move(next);
    }
    if (trace) trace->state.push_back(state);
  }
  return state;
}

}  // namespace

LwistaOut lwista(const Tensor& rain_feat, const ModelParams& m, const Tensor* initial_state) {
  if (rain_feat.channels != m.p)
    throw ShapeError("lwista: rain features must have p channels");
  Tensor g_r = conv2d(rain_feat, m.g);
  LwistaOut out;
  out.code = lwista_loop(g_r, m, initial_state, out.wtilde, nullptr);
  return out;
}

Tensor reconstruct_rain(const Tensor& code, const ModelParams& m) {
  if (code.channels != m.c) throw ShapeError("reconstruct_rain: code must have c channels");
  return conv2d(activation(ActivationKind::relu, conv2d(code, m.e3)), m.e4);
}

DerainResult derain(const Tensor& y, const ModelParams& m) {
  Tensor r_eps = extract_rain(y, m);
  LwistaOut solved = lwista(r_eps, m);
  Tensor head = reconstruct_rain(solved.code, m);
  DerainResult result;
  if (m.toggles.grl) {
    result.r = std::move(head);
    result.x = sub(y, result.r);
  } else {
    result.x = std::move(head);
    result.r = sub(y, result.x);
  }
  result.wtilde_final = std::move(solved.wtilde);
  result.rde = rde(result.wtilde_final);
  return result;
}

namespace {

// Joint multiscale loop over the shared residual.
std::array<Tensor, 3> mlwista_loop(const Tensor& rain_feat, const MsModelParams& m,
                                   std::array<WeightVector, 3>& wtilde_out,
                                   MsLwistaTrace* trace) {
  std::array<Tensor, 3> state;
  for (int j = 0; j < 3; ++j) state[j] = Tensor(m.c, rain_feat.height, rain_feat.width);
  for (int j = 0; j < 3; ++j) wtilde_out[j] = ones_gate(m.c);
  if (trace) {
    trace->state.clear();
    trace->iter.clear();
    trace->state.push_back(state);
  }
  for (int t = 0; t < m.T; ++t) {
    MsIterTrace* it = nullptr;
    if (trace) {
      trace->iter.emplace_back();
      it = &trace->iter.back();
    }
    std::array<Tensor, 3> activated;
    if (!m.toggles.pa) {
      for (int j = 0; j < 3; ++j) {
        ActTrace* at = it ? &it->act[j] : nullptr;
        activated[j] =
            act_block(state[j], m.lwb_wtilde[j], m.lwb_w[j], m.theta[t][j], m.toggles.rw, at);
        if (m.toggles.rw && t == m.T - 1)
          wtilde_out[j] = at ? at->wtilde.gate : lwb_forward(state[j], m.lwb_wtilde[j]).weights;
      }
    }
    const std::array<Tensor, 3>& synth_src = m.toggles.pa ? state : activated;
    Tensor resid = rain_feat;
    for (int j = 0; j < 3; ++j) {
      Tensor part = conv2d(synth_src[j], m.s[j]);
      for (std::size_t i = 0; i < resid.size(); ++i) resid.data[i] -= part.data[i];
    }
    if (it) it->resid = resid;
    std::array<Tensor, 3> next;
    for (int j = 0; j < 3; ++j) {
      Tensor v = conv2d(resid, m.g[j]);
      if (m.toggles.lrl)
        for (std::size_t i = 0; i < v.size(); ++i) v.data[i] += synth_src[j].data[i];
      if (m.toggles.pa) {
        ActTrace* at = it ? &it->act[j] : nullptr;
        next[j] = act_block(v, m.lwb_wtilde[j], m.lwb_w[j], m.theta[t][j], m.toggles.rw, at);
        if (m.toggles.rw && t == m.T - 1)
          wtilde_out[j] = at ? at->wtilde.gate : lwb_forward(v, m.lwb_wtilde[j]).weights;
        if (it) it->v[j] = std::move(v);
      } else {
        next[j] = std::move(v);
      }
    }
    state = std::move(next);
    if (trace) trace->state.push_back(state);
  }
  return state;
}

}  // namespace

MlwistaOut mlwista(const Tensor& rain_feat, const MsModelParams& m) {
  if (rain_feat.channels != m.p)
    throw ShapeError("mlwista: rain features must have p channels");
  MlwistaOut out;
  out.codes = mlwista_loop(rain_feat, m, out.wtilde, nullptr);
  return out;
}

Tensor reconstruct_rain(const std::array<Tensor, 3>& codes, const MsModelParams& m) {
  Tensor pre = conv2d(codes[0], m.s[0]);
  for (int j = 1; j < 3; ++j) {
    Tensor part = conv2d(codes[j], m.s[j]);
    for (std::size_t i = 0; i < pre.size(); ++i) pre.data[i] += part.data[i];
  }
  return conv2d(activation(ActivationKind::relu, pre), m.e4);
}

DerainResult derain_multiscale(const Tensor& y, const MsModelParams& m) {
  Tensor r_eps = extract_rain(y, m);
  MlwistaOut solved = mlwista(r_eps, m);
  Tensor head = reconstruct_rain(solved.codes, m);
  DerainResult result;
  if (m.toggles.grl) {
    result.r = std::move(head);
    result.x = sub(y, result.r);
  } else {
    result.x = std::move(head);
    result.r = sub(y, result.x);
  }
  // density over all scales: mean of the concatenated final gates
  WeightVector all;
  for (int j = 0; j < 3; ++j)
    all.values.insert(all.values.end(), solved.wtilde[j].values.begin(),
                      solved.wtilde[j].values.end());
  result.rde = rde(all);
  result.wtilde_final = std::move(all);
  return result;
}

std::vector<TensorRef> tensor_refs(ModelParams& m) {
  std::vector<TensorRef> refs;
  auto bank = [&](const std::string& name, KernelBank& k) {
    refs.push_back({name, &k.data, {k.out_channels, k.in_channels, k.kernel_size, k.kernel_size}});
  };
  auto fc = [&](const std::string& name, std::vector<double>& w, int rows, int cols) {
    refs.push_back({name, &w, {rows, cols}});
  };
  bank("e1", m.e1);
  bank("e2", m.e2);
  bank("g", m.g);
  bank("s", m.s);
  bank("e3", m.e3);
  bank("e4", m.e4);
  fc("lwb_w.fc1", m.lwb_w.fc1, m.lwb_w.hidden, m.c);
  fc("lwb_w.fc2", m.lwb_w.fc2, m.c, m.lwb_w.hidden);
  fc("lwb_wtilde.fc1", m.lwb_wtilde.fc1, m.lwb_wtilde.hidden, m.c);
  fc("lwb_wtilde.fc2", m.lwb_wtilde.fc2, m.c, m.lwb_wtilde.hidden);
  refs.push_back({"theta", &m.theta, {m.c}, /*clamp_nonneg=*/true});
  return refs;
}

std::vector<TensorRef> tensor_refs(MsModelParams& m) {
  std::vector<TensorRef> refs;
  auto bank = [&](const std::string& name, KernelBank& k) {
    refs.push_back({name, &k.data, {k.out_channels, k.in_channels, k.kernel_size, k.kernel_size}});
  };
  auto fc = [&](const std::string& name, std::vector<double>& w, int rows, int cols) {
    refs.push_back({name, &w, {rows, cols}});
  };
  bank("e1", m.e1);
  bank("e2", m.e2);
  bank("e4", m.e4);
  for (int j = 0; j < 3; ++j) {
    const std::string sj = std::to_string(j + 1);
    bank("g." + sj, m.g[j]);
    bank("s." + sj, m.s[j]);
    fc("lwb_w." + sj + ".fc1", m.lwb_w[j].fc1, m.lwb_w[j].hidden, m.c);
    fc("lwb_w." + sj + ".fc2", m.lwb_w[j].fc2, m.c, m.lwb_w[j].hidden);
    fc("lwb_wtilde." + sj + ".fc1", m.lwb_wtilde[j].fc1, m.lwb_wtilde[j].hidden, m.c);
    fc("lwb_wtilde." + sj + ".fc2", m.lwb_wtilde[j].fc2, m.c, m.lwb_wtilde[j].hidden);
  }
  for (int j = 0; j < 3; ++j)
    for (int t = 0; t < m.T; ++t)
      refs.push_back({"theta." + std::to_string(j + 1) + "." + std::to_string(t + 1),
                      &m.theta[t][j],
                      {m.c},
                      /*clamp_nonneg=*/true});
  return refs;
}

void forward_traced(const Tensor& y, const ModelParams& m, ForwardTrace& trace) {
  extract_impl(y, m.e1, m.e2, &trace.extract);
  Tensor g_r = conv2d(trace.extract.r_eps, m.g);
  WeightVector wtilde;
  Tensor code = lwista_loop(g_r, m, nullptr, wtilde, &trace.lwista);
  trace.recon.pre = conv2d(code, m.e3);
  trace.recon.post = activation(ActivationKind::relu, trace.recon.pre);
  trace.recon.head = conv2d(trace.recon.post, m.e4);
  if (m.toggles.grl) {
    trace.r = trace.recon.head;
    trace.x = sub(y, trace.r);
  } else {
    trace.x = trace.recon.head;
    trace.r = sub(y, trace.x);
  }
  trace.wtilde_final = std::move(wtilde);
  trace.rde_value = rde(trace.wtilde_final);
}

void forward_traced(const Tensor& y, const MsModelParams& m, MsForwardTrace& trace) {
  extract_impl(y, m.e1, m.e2, &trace.extract);
  std::array<WeightVector, 3> wtilde;
  std::array<Tensor, 3> codes = mlwista_loop(trace.extract.r_eps, m, wtilde, &trace.lwista);
  trace.recon.pre = conv2d(codes[0], m.s[0]);
  for (int j = 1; j < 3; ++j) {
    Tensor part = conv2d(codes[j], m.s[j]);
    for (std::size_t i = 0; i < trace.recon.pre.size(); ++i)
      trace.recon.pre.data[i] += part.data[i];
  }
  trace.recon.post = activation(ActivationKind::relu, trace.recon.pre);
  trace.recon.head = conv2d(trace.recon.post, m.e4);
  if (m.toggles.grl) {
    trace.r = trace.recon.head;
    trace.x = sub(y, trace.r);
  } else {
    trace.x = trace.recon.head;
    trace.r = sub(y, trace.x);
  }
  trace.wtilde_final = std::move(wtilde);
  double acc = 0.0;
  for (int j = 0; j < 3; ++j) acc += rde(trace.wtilde_final[j]);
  trace.rde_value = acc / 3.0;
}

}  // namespace coderain
