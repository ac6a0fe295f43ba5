#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfglab/grid.hpp"
#include "mfglab/rng.hpp"

using namespace mfg;

namespace {
constexpr double kPi = 3.14159265358979323846;

Field sampled(const Grid& g, double (*fn)(double)) {
  Field f(g);
  for (int i = 0; i < g.n; ++i) f[i] = fn(g.coord(i));
  return f;
}

Field random_field(const Grid& g, Rng& rng) {
  Field f(g);
  for (int i = 0; i < g.size; ++i) f[i] = rng.uniform(-1.0, 1.0);
  return f;
}
}  // namespace

TEST_CASE("build_grid basics") {
  Grid g = build_grid(8, 1);
  CHECK(g.n == 8);
  CHECK(g.size == 8);
  CHECK(g.h == Catch::Approx(0.125).epsilon(0));
  Grid g2 = build_grid(16, 2);
  CHECK(g2.size == 256);
  CHECK_THROWS_AS(build_grid(3, 1), GridError);
  CHECK_THROWS_AS(build_grid(8, 3), GridError);
}

TEST_CASE("gradient_pair on simple fields") {
  Grid g = build_grid(16, 1);
  Field c(g, 3.5);
  auto [fwd, bwd] = gradient_pair(c);
  for (int i = 0; i < g.n; ++i) {
    CHECK(fwd.comp[0][i] == 0.0);
    CHECK(bwd.comp[0][i] == 0.0);
  }

  // sawtooth: forward difference is 1 except at the wrap node
  Field ramp(g);
  for (int i = 0; i < g.n; ++i) ramp[i] = g.coord(i);
  auto [fr, br] = gradient_pair(ramp);
  for (int i = 0; i < g.n - 1; ++i) CHECK(fr.comp[0][i] == Catch::Approx(1.0).margin(1e-13));
  CHECK(fr.comp[0][g.n - 1] == Catch::Approx(1.0 - g.n).margin(1e-10));

  Grid gf = build_grid(256, 1);
  Field s = sampled(gf, [](double x) { return std::sin(2.0 * kPi * x); });
  auto [fs, bs] = gradient_pair(s);
  CHECK(fs.comp[0][0] == Catch::Approx(2.0 * kPi).margin(1e-3));
}

TEST_CASE("laplacian eigenfunction and telescoping") {
  Grid g = build_grid(256, 1);
  Field c(g, -1.25);
  Field lc = laplacian(c);
  CHECK(norm(lc, Norm::Sup) == 0.0);

  Field f = sampled(g, [](double x) { return std::cos(2.0 * kPi * x); });
  Field lf = laplacian(f);
  double err = 0.0;
  for (int i = 0; i < g.n; ++i)
    err = std::max(err, std::abs(lf[i] + 4.0 * kPi * kPi * f[i]));
  CHECK(err < 5e-3);  // O(h^2) on the analytic eigenvalue

  Rng rng(7);
  Field r = random_field(g, rng);
  CHECK(std::abs(integrate(laplacian(r))) < 1e-12);
}

TEST_CASE("divergence: telescoping and exact adjointness") {
  for (int d : {1, 2}) {
    Grid g = build_grid(d == 1 ? 128 : 24, d);
    Rng rng(11 + d);
    VectorField v(g);
    for (int c = 0; c < d; ++c)
      for (int i = 0; i < g.size; ++i) v.comp[c][i] = rng.uniform(-1.0, 1.0);
    CHECK(std::abs(integrate(divergence(v))) < 1e-13);

    Field f = random_field(g, rng);
    auto [fwd, bwd] = gradient_pair(f);
    double lhs = inner(divergence(v), f);
    double rhs = -inner(v, fwd);
    double scale = norm(f, Norm::L2);
    double vnorm = 0.0;
    for (int c = 0; c < d; ++c)
      for (int i = 0; i < g.size; ++i) vnorm += v.comp[c][i] * v.comp[c][i];
    scale *= std::sqrt(vnorm * (d == 1 ? g.h : g.h * g.h));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(scale, 1.0));
  }
}

TEST_CASE("laplacian equals divergence of forward gradient exactly") {
  Grid g = build_grid(32, 2);
  Rng rng(3);
  Field f = random_field(g, rng);
  Field lap = laplacian(f);
  Field composed = divergence(gradient_pair(f).first);
  CHECK(sup_dist(lap, composed) < 1e-11);
}

TEST_CASE("integrate and norms") {
  Grid g = build_grid(128, 1);
  Field one(g, 1.0);
  CHECK(integrate(one) == Catch::Approx(1.0).margin(1e-15));

  Field s = sampled(g, [](double x) { return std::sin(2.0 * kPi * x); });
  CHECK(std::abs(integrate(s)) < 1e-14);

  // hand summation oracle on an arbitrary density-like field
  Field m(g);
  for (int i = 0; i < g.n; ++i) m[i] = 1.0 + 0.5 * std::cos(2.0 * kPi * g.coord(i));
  double hand = 0.0;
  for (int i = 0; i < g.n; ++i) hand += m[i];
  hand *= g.h;
  CHECK(integrate(m) == Catch::Approx(hand).margin(1e-14));

  Field neg(g, -2.0);
  CHECK(norm(neg, Norm::Sup) == 2.0);
  Field c = sampled(g, [](double x) { return std::cos(2.0 * kPi * x); });
  CHECK(norm(c, Norm::L2) == Catch::Approx(1.0 / std::sqrt(2.0)).margin(1e-14));
  Field z(g, 0.0);
  CHECK(norm(z, Norm::Sup) == 0.0);
  CHECK(norm(z, Norm::L1) == 0.0);
  CHECK(norm(z, Norm::L2) == 0.0);
}

TEST_CASE("operators are linear") {
  Grid g = build_grid(64, 1);
  Rng rng(21);
  Field f = random_field(g, rng), h = random_field(g, rng);
  double a = 1.7, b = -0.3;
  Field combo(g);
  for (int i = 0; i < g.n; ++i) combo[i] = a * f[i] + b * h[i];
  Field lhs = laplacian(combo);
  Field rhs(g);
  Field lf = laplacian(f), lh = laplacian(h);
  for (int i = 0; i < g.n; ++i) rhs[i] = a * lf[i] + b * lh[i];
  CHECK(sup_dist(lhs, rhs) < 1e-9);
}
