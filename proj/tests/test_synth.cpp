#include "coderain/synth.hpp"

#include "coderain/dataset.hpp"
#include "coderain/metrics.hpp"
#include "coderain/png_io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

using namespace coderain;
namespace fs = std::filesystem;

TEST_CASE("streak kernel closed forms") {
  KernelBank point = make_streak_kernel(1, 45.0, 1);
  CHECK(point.kernel_size == 1);
  CHECK(point.data[0] == 1.0);

  KernelBank vertical = make_streak_kernel(5, 90.0, 1);
  const int s = vertical.kernel_size;
  const int mid = s / 2;
  double column_sum = 0.0;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (x != mid) CHECK(vertical.at(0, 0, y, x) == 0.0);
      if (x == mid) column_sum += vertical.at(0, 0, y, x);
    }
  CHECK(column_sum == doctest::Approx(1.0).epsilon(1e-12));
  int covered = 0;
  for (int y = 0; y < s; ++y)
    if (vertical.at(0, 0, y, mid) > 0.0) ++covered;
  CHECK(covered == 5);

  CHECK_THROWS_AS(make_streak_kernel(0, 0.0, 1), ParamError);
  CHECK_THROWS_AS(make_streak_kernel(5, 0.0, 0), ParamError);
}

TEST_CASE("streak kernels carry unit mass") {
  std::mt19937_64 rng(401);
  for (int trial = 0; trial < 20; ++trial) {
    const int length = 1 + static_cast<int>(rng() % 15);
    const double angle = static_cast<double>(rng() % 360);
    const int width = 1 + static_cast<int>(rng() % 3);
    KernelBank k = make_streak_kernel(length, angle, width);
    double mass = 0.0;
    for (double v : k.data) {
      CHECK(v >= 0.0);
      mass += v;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("rain generation determinism and edge cases") {
  RainSpec spec;
  spec.density = 0.0;
  spec.seed = 5;
  CHECK(max_abs(generate_rain(24, 24, spec)) == 0.0);

  spec.density = 0.03;
  Tensor a = generate_rain(24, 24, spec);
  Tensor b = generate_rain(24, 24, spec);
  CHECK(a.data == b.data);
  for (double v : a.data) CHECK(v >= 0.0);
  for (std::size_t i = 0; i < a.plane(); ++i) {
    CHECK(a.channel(0)[i] == a.channel(1)[i]);
    CHECK(a.channel(0)[i] == a.channel(2)[i]);
  }

  RainSpec bad = spec;
  bad.density = 1.5;
  CHECK_THROWS_AS(generate_rain(8, 8, bad), ParamError);
}

TEST_CASE("spike counts follow the binomial rate") {
  RainSpec spec;
  spec.density = 0.02;
  spec.intensity = 1.0;
  spec.lengths = {1};  // unit kernel: the rain map is the spike map
  const int h = 32, w = 32;
  long total = 0;
  const int runs = 100;
  for (int i = 0; i < runs; ++i) {
    spec.seed = 1000 + i;
    Tensor r = generate_rain(h, w, spec);
    for (std::size_t k = 0; k < r.plane(); ++k)
      if (r.channel(0)[k] > 0.0) ++total;
  }
  const double n = static_cast<double>(runs) * h * w;
  const double expected = n * spec.density;
  const double sigma = std::sqrt(n * spec.density * (1.0 - spec.density));
  CHECK(std::abs(total - expected) <= 3.0 * sigma);
}

TEST_CASE("composition clamps and preserves exact sums") {
  Tensor x(3, 2, 2), r(3, 2, 2);
  for (double& v : x.data) v = 0.2;
  for (double& v : r.data) v = 0.3;
  Tensor y = compose(x, r);
  for (double v : y.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  for (double& v : x.data) v = 0.9;
  for (double& v : r.data) v = 0.5;
  Tensor clamped = compose(x, r);
  for (double v : clamped.data) CHECK(v == 1.0);

  Tensor zero(3, 2, 2);
  Tensor same = compose(x, zero);
  CHECK(same.data == x.data);
}

TEST_CASE("clean backgrounds are deterministic and inside range") {
  Tensor a = generate_clean(32, 32, 17);
  Tensor b = generate_clean(32, 32, 17);
  CHECK(a.data == b.data);
  for (double v : a.data) {
    CHECK(v >= 0.05);
    CHECK(v <= 0.95);
  }
  Tensor c = generate_clean(32, 32, 18);
  CHECK(a.data != c.data);
}

TEST_CASE("corpus writing: manifest, determinism, density monotonicity") {
  const fs::path dir = fs::temp_directory_path() / "coderain_test_corpus";
  fs::remove_all(dir);

  SynthConfig cfg;
  cfg.out_dir = dir.string();
  cfg.pairs = 12;
  cfg.size = 48;
  cfg.seed = 7;
  auto entries = write_corpus(cfg);
  CHECK(entries.size() == 12);

  auto manifest = read_manifest(dir.string());
  CHECK(manifest.size() == 12);

  // regeneration with the same seed reproduces identical bytes
  std::ifstream f1(dir / "pair_00003_rain.png", std::ios::binary);
  std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  write_corpus(cfg);
  std::ifstream f2(dir / "pair_00003_rain.png", std::ios::binary);
  std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(bytes1 == bytes2);

  // rainy PSNR drops as the density level rises
  std::map<std::string, std::pair<double, int>> by_level;
  for (const auto& e : manifest) {
    Tensor rainy = read_png((dir / (e.id + "_rain.png")).string());
    Tensor clean = read_png((dir / (e.id + "_clean.png")).string());
    auto& acc = by_level[e.level];
    acc.first += psnr(rainy, clean);
    acc.second += 1;
  }
  const double light = by_level["light"].first / by_level["light"].second;
  const double medium = by_level["medium"].first / by_level["medium"].second;
  const double heavy = by_level["heavy"].first / by_level["heavy"].second;
  CHECK(light > medium);
  CHECK(medium > heavy);
  CHECK(light - heavy > 10.0);

  fs::remove_all(dir);
}
