#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "mfglab/grid.hpp"
#include "mfglab/linsolve.hpp"
#include "mfglab/rng.hpp"

using namespace mfg;

TEST_CASE("PeriodicTridiag matches a dense solve") {
  Rng rng(42);
  const int n = 50;
  std::vector<double> a(n), b(n), c(n), r(n);
  for (int i = 0; i < n; ++i) {
    a[i] = rng.uniform(-1.0, 1.0);
    c[i] = rng.uniform(-1.0, 1.0);
    b[i] = 4.0 + rng.uniform(0.0, 1.0);  // diagonally dominant
    r[i] = rng.uniform(-2.0, 2.0);
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = b[i];
    A(i, (i + n - 1) % n) = a[i];
    A(i, (i + 1) % n) = c[i];
  }
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) rhs(i) = r[i];
  Eigen::VectorXd xd = A.fullPivLu().solve(rhs);

  PeriodicTridiag solver(a, b, c);
  std::vector<double> x;
  solver.solve(r, x);
  for (int i = 0; i < n; ++i) CHECK(x[i] == Catch::Approx(xd(i)).margin(1e-11));
}

TEST_CASE("DiffusionSolver residual 1D") {
  Grid g = build_grid(128, 1);
  Rng rng(5);
  Field b(g);
  for (int i = 0; i < g.n; ++i) b[i] = rng.uniform(-1.0, 1.0);
  double s = 0.37;
  DiffusionSolver ds(g, s);
  Field x = ds.solve(b);
  Field lap = laplacian(x);
  double res = 0.0;
  for (int i = 0; i < g.n; ++i) res = std::max(res, std::abs(x[i] - s * lap[i] - b[i]));
  CHECK(res < 1e-11);
}

TEST_CASE("DiffusionSolver residual 2D via CG") {
  Grid g = build_grid(24, 2);
  Rng rng(6);
  Field b(g);
  for (int i = 0; i < g.size; ++i) b[i] = rng.uniform(-1.0, 1.0);
  double s = 0.02;
  DiffusionSolver ds(g, s, 0.0, 1e-13);
  Field x = ds.solve(b);
  Field lap = laplacian(x);
  double res = 0.0;
  for (int i = 0; i < g.size; ++i) res = std::max(res, std::abs(x[i] - s * lap[i] - b[i]));
  CHECK(res < 1e-11);
}

TEST_CASE("constant-vector invariance preserves mass through the solve") {
  Grid g = build_grid(64, 1);
  DiffusionSolver ds(g, 1.3);
  Field one(g, 1.0);
  Field x = ds.solve(one);
  for (int i = 0; i < g.n; ++i) CHECK(x[i] == Catch::Approx(1.0).margin(1e-13));
}
