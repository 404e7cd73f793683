#include "coderain/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace coderain;

namespace {

Tensor random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(c, h, w);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

}  // namespace

TEST_CASE("soft threshold basic values") {
  Tensor v(1, 1, 3);
  v.data = {0.5, -0.1, -0.5};
  Tensor out = soft_threshold(v, {0.2});
  CHECK(out.data[0] == doctest::Approx(0.3));
  CHECK(out.data[1] == 0.0);
  CHECK(out.data[2] == doctest::Approx(-0.3));
}

TEST_CASE("soft threshold rejects negative thresholds") {
  Tensor v(1, 2, 2);
  CHECK_THROWS_AS(soft_threshold(v, {-0.1}), ParamError);
  CHECK_THROWS_AS(soft_threshold(v, {0.1, 0.1}), ShapeError);
}

TEST_CASE("soft threshold is odd and non-expansive") {
  std::mt19937_64 rng(7);
  Tensor v = random_tensor(3, 6, 6, rng, -2.0, 2.0);
  Tensor w = random_tensor(3, 6, 6, rng, -2.0, 2.0);
  std::vector<double> theta{0.3, 0.0, 1.1};
  Tensor neg = scale(v, -1.0);
  Tensor a = soft_threshold(v, theta);
  Tensor b = soft_threshold(neg, theta);
  Tensor c = soft_threshold(w, theta);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(a.data[i] == -b.data[i]);
    CHECK(std::abs(a.data[i] - c.data[i]) <= std::abs(v.data[i] - w.data[i]) + 1e-15);
  }
}

TEST_CASE("activations") {
  Tensor x(1, 1, 2);
  x.data = {-1.5, 2.0};
  Tensor r = activation(ActivationKind::relu, x);
  CHECK(r.data[0] == 0.0);
  CHECK(r.data[1] == 2.0);

  Tensor zero(1, 1, 1);
  CHECK(activation(ActivationKind::sigmoid, zero).data[0] == doctest::Approx(0.5));

  std::mt19937_64 rng(11);
  Tensor v = random_tensor(2, 4, 4, rng, -5.0, 5.0);
  Tensor s1 = activation(ActivationKind::sigmoid, v);
  Tensor s2 = activation(ActivationKind::sigmoid, scale(v, -1.0));
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(s1.data[i] + s2.data[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("global average pool") {
  Tensor c(2, 3, 3);
  for (std::size_t i = 0; i < c.plane(); ++i) c.channel(0)[i] = 0.7;
  c.channel(1)[0] = 1;
  auto means = global_avg_pool(c);
  CHECK(means[0] == doctest::Approx(0.7));

  Tensor q(1, 2, 2);
  q.data = {1, 2, 3, 4};
  CHECK(global_avg_pool(q)[0] == doctest::Approx(2.5));

  std::mt19937_64 rng(3);
  Tensor r = random_tensor(3, 5, 7, rng);
  auto pooled = global_avg_pool(r);
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0.0;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x) acc += r.at(ch, y, x);
    CHECK(pooled[ch] == doctest::Approx(acc / 35.0).epsilon(1e-12));
  }
}

TEST_CASE("elementwise op shape checks") {
  Tensor a(1, 2, 2), b(1, 3, 2);
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(dot(a, b), ShapeError);
  CHECK_THROWS_AS(Tensor(0, 1, 1), ShapeError);
}
