#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfglab/fitting.hpp"
#include "mfglab/grid.hpp"
#include "mfglab/kernels.hpp"
#include "mfglab/rng.hpp"

using namespace mfg;

namespace {
constexpr double kPi = 3.14159265358979323846;

Field cosine(const Grid& g, double amp = 1.0, int k = 1) {
  Field f(g);
  for (int i = 0; i < g.n; ++i) f[i] = amp * std::cos(2.0 * kPi * k * g.coord(i));
  return f;
}

PathField zero_path(const TimeGrid& tg, const Grid& g) { return PathField(tg, g); }
}  // namespace

TEST_CASE("adjointness of the upwind transport") {
  Grid g = build_grid(64, 1);
  VectorField zero(g);
  CHECK(adjointness_check(zero, 3) < 1e-13);

  Rng rng(2024);
  VectorField b(g);
  for (int i = 0; i < g.n; ++i) b.comp[0][i] = rng.uniform(-2.0, 2.0);
  CHECK(adjointness_check(b, 10) < 1e-12);

  Grid g2 = build_grid(16, 2);
  VectorField b2(g2);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < g2.size; ++i) b2.comp[c][i] = rng.uniform(-2.0, 2.0);
  CHECK(adjointness_check(b2, 5) < 1e-12);

  // mismatched grids are rejected
  UpwindTransport t = UpwindTransport::from_drift(b);
  Field wrong(build_grid(32, 1));
  Field out;
  CHECK_THROWS_AS(t.apply(wrong, out), GridError);
}

TEST_CASE("fp kernel: invariant measure and heat eigenmode") {
  Grid g = build_grid(256, 1);
  HamiltonianSpec quad;
  TimeGrid tg = make_time_grid(0.05, 500);  // dt = 1e-4

  PathField u0 = zero_path(tg, g);
  Field ones(g, 1.0);
  PathField m = fp_forward_path(1.0, quad, u0, tg, ones);
  for (int k = 0; k <= tg.Nt; ++k) CHECK(sup_dist(m[k], ones) < 1e-12);

  Field m0(g);
  for (int i = 0; i < g.n; ++i) m0[i] = 1.0 + 0.5 * std::cos(2.0 * kPi * g.coord(i));
  PathField mh = fp_forward_path(1.0, quad, u0, tg, m0);
  double err = 0.0;
  for (int k = 0; k <= tg.Nt; ++k) {
    double t = mh.time(k);
    for (int i = 0; i < g.n; ++i) {
      double exact = 1.0 + 0.5 * std::exp(-4.0 * kPi * kPi * t) *
                               std::cos(2.0 * kPi * g.coord(i));
      err = std::max(err, std::abs(mh[k][i] - exact));
    }
  }
  CHECK(err < 1.5e-3);  // O(h^2 + dt)
}

TEST_CASE("fp kernel conserves mass and positivity under a rough drift") {
  Grid g = build_grid(128, 1);
  HamiltonianSpec quad;
  TimeGrid tg = cfl_time_grid(0.3, g.h, 2.0);
  Rng rng(8);
  PathField u(tg, g);
  for (int k = 0; k <= tg.Nt; ++k) {
    double a = 0.2 * std::sin(2.0 * kPi * k / std::max(1, tg.Nt));
    for (int i = 0; i < g.n; ++i)
      u[k][i] = a * std::sin(2.0 * kPi * g.coord(i)) +
                0.1 * std::cos(4.0 * kPi * g.coord(i));
  }
  Field m0(g);
  for (int i = 0; i < g.n; ++i) {
    double x = g.coord(i) - 0.5;
    m0[i] = std::exp(-40.0 * x * x);
  }
  double mass = integrate(m0);
  for (double& v : m0.values) v /= mass;
  PathField m = fp_forward_path(1.0, quad, u, tg, m0);
  for (int k = 0; k <= tg.Nt; ++k) {
    CHECK(std::abs(integrate(m[k]) - 1.0) <= 1e-12);
    CHECK(min_value(m[k]) >= -1e-12);
  }
}

TEST_CASE("fp kernel rejects CFL violations") {
  Grid g = build_grid(64, 1);
  VectorField V(g, 10.0);
  Field rho0 = cosine(g, 1.0);
  TimeGrid tg = make_time_grid(0.1, 10);  // dt = 0.01 >> h / (2|V|)
  CHECK_THROWS_AS(linear_fp_forward(1.0, V, nullptr, rho0, tg), KernelError);
}

TEST_CASE("hjb kernel: zero data gives the zero solution") {
  Grid g = build_grid(64, 1);
  HamiltonianSpec quad;
  TimeGrid tg = make_time_grid(1.0, 200);
  Field uT(g, 0.0);
  PathField u = hjb_backward_path(1.0, quad, uT, tg, [](int, Field& S) {
    for (double& s : S.values) s = 0.0;
  });
  for (int k = 0; k <= tg.Nt; ++k) CHECK(norm(u[k], Norm::Sup) < 1e-13);
}

TEST_CASE("hjb kernel obeys the maximum principle at small amplitude") {
  Grid g = build_grid(128, 1);
  HamiltonianSpec quad;
  TimeGrid tg = cfl_time_grid(0.5, g.h, 1.0);
  Field uT = cosine(g, 1e-3);
  PathField u = hjb_backward_path(1.0, quad, uT, tg, [&](int, Field& S) {
    S.values.assign(g.size, 0.0);
  });
  double supT = norm(uT, Norm::Sup);
  for (int k = 0; k <= tg.Nt; ++k) {
    CHECK(max_value(u[k]) <= supT + 1e-12);
    CHECK(norm(u[k], Norm::Sup) <= supT * 1.05);
  }
}

TEST_CASE("hjb kernel is monotone in the source") {
  Grid g = build_grid(96, 1);
  HamiltonianSpec quad;
  TimeGrid tg = cfl_time_grid(0.4, g.h, 1.0);
  Field uT = cosine(g, 0.2);
  Field bump(g);
  for (int i = 0; i < g.n; ++i)
    bump[i] = 0.3 * std::max(0.0, std::sin(2.0 * kPi * g.coord(i)));
  auto src_low = [&](int, Field& S) { S.values.assign(g.size, 0.0); };
  auto src_high = [&](int, Field& S) {
    S.grid = g;
    S.values = bump.values;
  };
  PathField ulow = hjb_backward_path(1.0, quad, uT, tg, src_low);
  PathField uhigh = hjb_backward_path(1.0, quad, uT, tg, src_high);
  for (int k = 0; k <= tg.Nt; ++k)
    for (int i = 0; i < g.n; ++i) CHECK(uhigh[k][i] >= ulow[k][i] - 1e-12);
}

TEST_CASE("linear backward kernel: constants and heat decay") {
  Grid g = build_grid(256, 1);
  VectorField V0(g);
  TimeGrid tg = make_time_grid(0.2, 2000);  // dt = 1e-4

  Field c(g, 2.5);
  PathField vc = linear_parabolic_backward(1.0, V0, nullptr, c, tg);
  for (int k = 0; k <= tg.Nt; ++k) CHECK(sup_dist(vc[k], c) < 1e-12);

  const double kappa = 0.7;
  PathField v = linear_parabolic_backward(kappa, V0, nullptr, cosine(g), tg);
  std::vector<double> tau, y;
  for (int k = tg.Nt; k >= 0; --k) {
    tau.push_back(tg.T - v.time(k));
    y.push_back(norm(v[k], Norm::L2));
  }
  ExpFit fit = fit_exponential(tau, y, ExpModel::OneSided);
  double rate = 4.0 * kPi * kPi * kappa;
  CHECK(std::abs(fit.rate - rate) / rate < 0.02);
}

TEST_CASE("linear backward kernel: constant drift advects, amplitude decay unchanged") {
  Grid g = build_grid(256, 1);
  VectorField V1(g, 1.0);
  TimeGrid tg = make_time_grid(0.2, 2000);
  PathField v = linear_parabolic_backward(1.0, V1, nullptr, cosine(g), tg);
  std::vector<double> tau, y;
  for (int k = tg.Nt; k >= 0; --k) {
    tau.push_back(tg.T - v.time(k));
    y.push_back(norm(v[k], Norm::L2));
  }
  ExpFit fit = fit_exponential(tau, y, ExpModel::OneSided);
  double rate = 4.0 * kPi * kPi;
  CHECK(std::abs(fit.rate - rate) / rate < 0.02);
}

TEST_CASE("linear forward kernel: zero data, heat mode, mean preservation") {
  Grid g = build_grid(256, 1);
  VectorField V0(g);
  TimeGrid tg = make_time_grid(0.1, 1000);

  Field z(g, 0.0);
  PathField r0 = linear_fp_forward(1.0, V0, nullptr, z, tg);
  for (int k = 0; k <= tg.Nt; ++k) CHECK(norm(r0[k], Norm::Sup) < 1e-14);

  PathField r = linear_fp_forward(1.0, V0, nullptr, cosine(g), tg);
  for (int k = 1; k <= tg.Nt; ++k) {
    double t = r.time(k);
    double expect = std::exp(-4.0 * kPi * kPi * t) / std::sqrt(2.0);
    if (expect > 1e-10)
      CHECK(norm(r[k], Norm::L2) == Catch::Approx(expect).epsilon(0.02));
  }

  Rng rng(9);
  VectorField flux(g);
  for (int i = 0; i < g.n; ++i) flux.comp[0][i] = rng.uniform(-1.0, 1.0);
  PathField rf = linear_fp_forward(1.0, V0, &flux, z, tg);
  for (int k = 0; k <= tg.Nt; ++k) CHECK(std::abs(integrate(rf[k])) <= 1e-12);
}

TEST_CASE("implicit hamiltonian stepping agrees with semi-implicit to O(dt)") {
  Grid g = build_grid(64, 1);
  HamiltonianSpec quad;
  TimeGrid tg = cfl_time_grid(0.3, g.h, 1.0);
  Field uT = cosine(g, 0.3);
  auto src = [&](int, Field& S) { S.values.assign(g.size, 0.0); };
  PathField a = hjb_backward_path(1.0, quad, uT, tg, src);
  HjbOptions opt;
  opt.implicit_hamiltonian = true;
  PathField b = hjb_backward_path(1.0, quad, uT, tg, src, opt);
  double d = 0.0;
  for (int k = 0; k <= tg.Nt; ++k) d = std::max(d, sup_dist(a[k], b[k]));
  CHECK(d < 5.0 * tg.dt);
}
