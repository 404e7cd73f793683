#include "coderain/model.hpp"

#include "coderain/train.hpp"

#include <doctest.h>

#include <chrono>
#include <random>

using namespace coderain;

namespace {

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(c, h, w);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

ModelParams tiny_model(std::uint64_t seed, Toggles toggles = {}) {
  ModelParams m(4, 8, 3, 3, 4, toggles);
  init_model(m, seed);
  return m;
}

MsModelParams tiny_ms_model(std::uint64_t seed, Toggles toggles = {}) {
  MsModelParams m(4, 8, {3, 5, 7}, 3, 4, toggles);
  init_model(m, seed);
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace

TEST_CASE("extract_rain composition and zero cases") {
  std::mt19937_64 rng(201);
  ModelParams m = tiny_model(1);
  Tensor y = random_tensor(3, 10, 10, rng);

  Tensor r_eps = extract_rain(y, m);
  CHECK(r_eps.channels == m.p);
  for (double v : r_eps.data) CHECK(v >= 0.0);

  Tensor manual = activation(ActivationKind::relu,
                             conv2d(activation(ActivationKind::relu, conv2d(y, m.e1)), m.e2));
  CHECK(max_abs_diff(r_eps, manual) < 1e-10);

  ModelParams zero_e2 = m;
  std::fill(zero_e2.e2.data.begin(), zero_e2.e2.data.end(), 0.0);
  CHECK(max_abs(extract_rain(y, zero_e2)) == 0.0);

  Tensor black(3, 10, 10);
  CHECK(max_abs(extract_rain(black, m)) == 0.0);

  CHECK_THROWS_AS(extract_rain(Tensor(2, 4, 4), m), ShapeError);
}

TEST_CASE("lwista first step closed form") {
  std::mt19937_64 rng(203);
  ModelParams m = tiny_model(2);
  m.T = 1;
  Tensor r_eps = random_tensor(m.p, 8, 8, rng);

  LwistaOut out = lwista(r_eps, m);
  Tensor g_r = conv2d(r_eps, m.g);
  LwbResult first = lwb_forward(g_r, m.lwb_wtilde);
  Tensor pre(m.c, 8, 8);
  for (int c = 0; c < m.c; ++c)
    for (std::size_t i = 0; i < pre.plane(); ++i)
      pre.channel(c)[i] = first.gated.channel(c)[i] - m.theta[c];
  Tensor expected = lwb_forward(activation(ActivationKind::relu, pre), m.lwb_w).gated;
  CHECK(max_abs_diff(out.code, expected) < 1e-10);
  for (int i = 0; i < m.c; ++i)
    CHECK(out.wtilde.values[i] == doctest::Approx(first.weights.values[i]).epsilon(1e-12));
}

TEST_CASE("huge thresholds freeze the code at zero") {
  std::mt19937_64 rng(207);
  ModelParams m = tiny_model(3);
  m.T = 5;
  std::fill(m.theta.begin(), m.theta.end(), 1e9);
  Tensor r_eps = random_tensor(m.p, 8, 8, rng);
  LwistaOut out = lwista(r_eps, m);
  CHECK(max_abs(out.code) == 0.0);
}

TEST_CASE("codes are nonnegative with the default wiring") {
  std::mt19937_64 rng(209);
  ModelParams m = tiny_model(4);
  m.T = 4;
  Tensor r_eps = random_tensor(m.p, 8, 8, rng);
  LwistaOut out = lwista(r_eps, m);
  for (double v : out.code.data) CHECK(v >= 0.0);
}

TEST_CASE("rw off reduces to the plain unfolded iteration") {
  std::mt19937_64 rng(211);
  Toggles toggles;
  toggles.rw = false;
  ModelParams m = tiny_model(5, toggles);
  m.T = 4;
  Tensor r_eps = random_tensor(m.p, 8, 8, rng);

  LwistaOut out = lwista(r_eps, m);

  // reference composition: z+ = relu(s (*) z + g (*) r - theta)
  Tensor g_r = conv2d(r_eps, m.g);
  Tensor z(m.c, 8, 8);
  for (int t = 0; t < m.T; ++t) {
    Tensor v = add(conv2d(z, m.s), g_r);
    Tensor pre(m.c, 8, 8);
    for (int c = 0; c < m.c; ++c)
      for (std::size_t i = 0; i < pre.plane(); ++i)
        pre.channel(c)[i] = v.channel(c)[i] - m.theta[c];
    z = activation(ActivationKind::relu, pre);
  }
  CHECK(max_abs_diff(out.code, z) < 1e-10);
  for (double w : out.wtilde.values) CHECK(w == 1.0);
}

TEST_CASE("parameter sharing: one iteration chained twice equals T=2") {
  std::mt19937_64 rng(213);
  ModelParams m = tiny_model(6);
  m.T = 2;
  Tensor r_eps = random_tensor(m.p, 8, 8, rng);
  LwistaOut two = lwista(r_eps, m);

  ModelParams one = m;
  one.T = 1;
  LwistaOut first = lwista(r_eps, one);
  // the second call reuses the same parameter objects
  ModelParams second = one;
  second.toggles.lrl = m.toggles.lrl;
  LwistaOut chained = lwista(r_eps, second, &first.code);
  CHECK(max_abs_diff(two.code, chained.code) < 1e-12);

  // mutating the shared bank changes every iteration
  ModelParams mutated = m;
  for (double& v : mutated.s.data) v += 0.5;
  LwistaOut changed = lwista(r_eps, mutated);
  CHECK(max_abs_diff(changed.code, two.code) > 0.0);
}

TEST_CASE("reconstruct_rain composition") {
  std::mt19937_64 rng(217);
  ModelParams m = tiny_model(7);
  Tensor code = random_tensor(m.c, 8, 8, rng);
  Tensor r = reconstruct_rain(code, m);
  CHECK(r.channels == 3);
  Tensor manual = conv2d(activation(ActivationKind::relu, conv2d(code, m.e3)), m.e4);
  CHECK(max_abs_diff(r, manual) < 1e-10);

  ModelParams zero_e4 = m;
  std::fill(zero_e4.e4.data.begin(), zero_e4.e4.data.end(), 0.0);
  CHECK(max_abs(reconstruct_rain(code, zero_e4)) == 0.0);
  CHECK(max_abs(reconstruct_rain(Tensor(m.c, 8, 8), m)) == 0.0);
}

TEST_CASE("derain identity with a zero head and exact global residual") {
  std::mt19937_64 rng(219);
  ModelParams m = tiny_model(8);
  Tensor y = random_tensor(3, 12, 12, rng);

  ModelParams zero_e4 = m;
  std::fill(zero_e4.e4.data.begin(), zero_e4.e4.data.end(), 0.0);
  DerainResult res = derain(y, zero_e4);
  CHECK(max_abs(res.r) == 0.0);
  CHECK(max_abs_diff(res.x, y) == 0.0);

  // x must equal y - r bitwise for arbitrary parameters
  for (int trial = 0; trial < 5; ++trial) {
    ModelParams random_model = tiny_model(100 + trial);
    DerainResult out = derain(y, random_model);
    Tensor recomputed = sub(y, out.r);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(out.x.data[i] == recomputed.data[i]);
    CHECK(out.rde == doctest::Approx(rde(out.wtilde_final)).epsilon(1e-12));
  }
}

TEST_CASE("grl off predicts the image directly") {
  std::mt19937_64 rng(223);
  Toggles toggles;
  toggles.grl = false;
  ModelParams m = tiny_model(9, toggles);
  Tensor y = random_tensor(3, 8, 8, rng);
  DerainResult res = derain(y, m);
  // head output becomes x; r is the induced difference
  Tensor r_eps = extract_rain(y, m);
  LwistaOut solved = lwista(r_eps, m);
  Tensor head = reconstruct_rain(solved.code, m);
  CHECK(max_abs_diff(res.x, head) == 0.0);
  CHECK(max_abs_diff(res.r, sub(y, head)) == 0.0);
}

TEST_CASE("mlwista zeroed upper scales collapse to a single-scale recursion") {
  std::mt19937_64 rng(227);
  MsModelParams m = tiny_ms_model(10);
  m.T = 3;
  for (int j = 1; j < 3; ++j) {
    std::fill(m.g[j].data.begin(), m.g[j].data.end(), 0.0);
    std::fill(m.s[j].data.begin(), m.s[j].data.end(), 0.0);
  }
  Tensor r_eps = random_tensor(m.p, 8, 8, rng);
  MlwistaOut out = mlwista(r_eps, m);
  CHECK(max_abs(out.codes[1]) == 0.0);
  CHECK(max_abs(out.codes[2]) == 0.0);

  // scale 1 follows its own recursion against the residual it alone produces
  Tensor z(m.c, 8, 8);
  for (int t = 0; t < m.T; ++t) {
    Tensor resid = sub(r_eps, conv2d(z, m.s[0]));
    Tensor v = add(z, conv2d(resid, m.g[0]));
    v = act_block(v, m.lwb_wtilde[0], m.lwb_w[0], m.theta[t][0], m.toggles.rw, nullptr);
    z = std::move(v);
  }
  CHECK(max_abs_diff(out.codes[0], z) < 1e-10);
}

TEST_CASE("mlwista single iteration equals hand composition") {
  std::mt19937_64 rng(229);
  MsModelParams m = tiny_ms_model(11);
  m.T = 1;
  m.theta.resize(1);
  Tensor r_eps = random_tensor(m.p, 8, 8, rng);
  MlwistaOut out = mlwista(r_eps, m);
  for (int j = 0; j < 3; ++j) {
    // all codes start at zero, so the shared residual is just the input
    Tensor v = conv2d(r_eps, m.g[j]);
    Tensor expected = act_block(v, m.lwb_wtilde[j], m.lwb_w[j], m.theta[0][j], true, nullptr);
    CHECK(max_abs_diff(out.codes[j], expected) < 1e-10);
  }
}

TEST_CASE("derain_multiscale trivial cases") {
  std::mt19937_64 rng(233);
  MsModelParams m = tiny_ms_model(12);
  Tensor y = random_tensor(3, 12, 12, rng);

  MsModelParams zero_e4 = m;
  std::fill(zero_e4.e4.data.begin(), zero_e4.e4.data.end(), 0.0);
  DerainResult res = derain_multiscale(y, zero_e4);
  CHECK(max_abs(res.r) == 0.0);
  CHECK(max_abs_diff(res.x, y) == 0.0);

  MsModelParams frozen = m;
  for (auto& per_iter : frozen.theta)
    for (auto& v : per_iter) std::fill(v.begin(), v.end(), 1e9);
  DerainResult res2 = derain_multiscale(y, frozen);
  CHECK(max_abs(res2.r) == 0.0);

  DerainResult res3 = derain_multiscale(y, m);
  Tensor recomputed = sub(y, res3.r);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(res3.x.data[i] == recomputed.data[i]);
  CHECK(res3.wtilde_final.values.size() == static_cast<std::size_t>(3 * m.c));
}

TEST_CASE("tensor_refs canonical layout") {
  ModelParams m = tiny_model(13);
  auto refs = tensor_refs(m);
  const std::vector<std::string> expected{"e1",         "e2",         "g",
                                          "s",          "e3",         "e4",
                                          "lwb_w.fc1",  "lwb_w.fc2",  "lwb_wtilde.fc1",
                                          "lwb_wtilde.fc2", "theta"};
  REQUIRE(refs.size() == expected.size());
  for (std::size_t i = 0; i < refs.size(); ++i) CHECK(refs[i].name == expected[i]);
  CHECK(refs.back().clamp_nonneg);

  MsModelParams ms = tiny_ms_model(14);
  auto ms_refs = tensor_refs(ms);
  REQUIRE(ms_refs.size() == 3 + 3 * 6 + 3 * ms.T);
  CHECK(ms_refs[0].name == "e1");
  CHECK(ms_refs[2].name == "e4");
  CHECK(ms_refs[3].name == "g.1");
  CHECK(ms_refs[4].name == "s.1");
  CHECK(ms_refs[9].name == "g.2");
  CHECK(ms_refs[21].name == "theta.1.1");
  CHECK(ms_refs[21 + ms.T].name == "theta.2.1");
  CHECK(ms_refs.back().name == "theta.3." + std::to_string(ms.T));
  CHECK(ms_refs.back().clamp_nonneg);
}

TEST_CASE("runtime grows roughly linearly in the iteration count") {
  std::mt19937_64 rng(241);
  ModelParams m(8, 16, 3, 5, 4);
  init_model(m, 15);
  Tensor y = random_tensor(3, 48, 48, rng);

  auto time_once = [&](int T) {
    ModelParams clone = m;
    clone.T = T;
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      derain(y, clone);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
      best = std::min(best, ms);
    }
    return best;
  };
  const double t5 = time_once(5);
  const double t25 = time_once(25);
  // T=25 should cost about 5x a T=5 run, within a factor of two
  CHECK(t25 >= 2.5 * t5 * 0.8);  // small slack below the 2x window for timer noise
  CHECK(t25 <= 10.0 * t5 * 1.2);
}
