#pragma once

// Linear solvers for the implicit diffusion steps: a periodic tridiagonal
// solver (Thomas + Sherman-Morrison corner correction, factorization cached
// for repeated right-hand sides) in 1D, and plain conjugate gradients with a
// tight absolute tolerance for the 2D five-point operator.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mfglab/grid.hpp"

namespace mfg {

struct LinSolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Solves A x = r where A is tridiagonal with periodic corner entries:
//   A[i][i] = b[i], A[i][i-1] = a[i], A[i][i+1] = c[i],
//   A[0][n-1] = a[0], A[n-1][0] = c[n-1].
class PeriodicTridiag {
 public:
  PeriodicTridiag() = default;

  PeriodicTridiag(std::vector<double> a, std::vector<double> b, std::vector<double> c)
      : a_(std::move(a)), c_(std::move(c)) {
    const size_t n = b.size();
    if (n < 3 || a_.size() != n || c_.size() != n)
      throw LinSolveError("PeriodicTridiag: need n >= 3 matching bands");
    gamma_ = -b[0];
    bmod_ = std::move(b);
    bmod_[0] -= gamma_;
    bmod_[n - 1] -= a_[0] * c_[n - 1] / gamma_;

    cp_.resize(n);
    invm_.resize(n);
    invm_[0] = 1.0 / bmod_[0];
    cp_[0] = c_[0] * invm_[0];
    for (size_t i = 1; i < n; ++i) {
      double m = bmod_[i] - a_[i] * cp_[i - 1];
      if (m == 0.0) throw LinSolveError("PeriodicTridiag: zero pivot");
      invm_[i] = 1.0 / m;
      cp_[i] = c_[i] * invm_[i];
    }
    // z solves A' z = u with u = (gamma, 0, ..., c[n-1])
    std::vector<double> u(n, 0.0);
    u[0] = gamma_;
    u[n - 1] = c_[n - 1];
    z_.resize(n);
    thomas(u, z_);
    corr_ = 1.0 / (1.0 + z_[0] + a_[0] / gamma_ * z_[n - 1]);
  }

  // constant-coefficient convenience: diag b, off-diagonals a (all rows)
  static PeriodicTridiag constant(size_t n, double diag, double off) {
    return PeriodicTridiag(std::vector<double>(n, off), std::vector<double>(n, diag),
                           std::vector<double>(n, off));
  }

  void solve(const std::vector<double>& r, std::vector<double>& x) const {
    const size_t n = bmod_.size();
    thomas(r, x);
    double fact = (x[0] + a_[0] / gamma_ * x[n - 1]) * corr_;
    for (size_t i = 0; i < n; ++i) x[i] -= fact * z_[i];
  }

  size_t size() const { return bmod_.size(); }

 private:
  void thomas(const std::vector<double>& r, std::vector<double>& x) const {
    const size_t n = bmod_.size();
    x.resize(n);
    x[0] = r[0] * invm_[0];
    for (size_t i = 1; i < n; ++i) x[i] = (r[i] - a_[i] * x[i - 1]) * invm_[i];
    for (size_t i = n - 1; i-- > 0;) x[i] -= cp_[i] * x[i + 1];
  }

  std::vector<double> a_, c_, bmod_, cp_, invm_, z_;
  double gamma_ = 0.0, corr_ = 0.0;
};

// ---------------------------------------------------------------------------
// Implicit diffusion solve: (1 + zeta) I - s L with L the periodic Laplacian.
// 1D: direct periodic tridiagonal. 2D: conjugate gradients, |r|_2 <= tol.
// ---------------------------------------------------------------------------

class DiffusionSolver {
 public:
  DiffusionSolver() = default;

  DiffusionSolver(const Grid& g, double s, double zeta = 0.0, double cg_tol = 1e-13)
      : grid_(g), s_(s), zeta_(zeta), cg_tol_(cg_tol) {
    if (g.d == 1) {
      double ih2 = 1.0 / (g.h * g.h);
      trid_ = PeriodicTridiag::constant(g.n, 1.0 + zeta + 2.0 * s * ih2, -s * ih2);
    }
  }

  void solve(const Field& rhs, Field& x) const {
    if (!(rhs.grid == grid_)) throw LinSolveError("DiffusionSolver: grid mismatch");
    if (grid_.d == 1) {
      x.grid = grid_;
      trid_.solve(rhs.values, x.values);
      return;
    }
    cg(rhs, x);
  }

  Field solve(const Field& rhs) const {
    Field x(grid_);
    solve(rhs, x);
    return x;
  }

 private:
  void apply(const Field& p, Field& out) const {
    const int n = grid_.n;
    const double ih2 = s_ / (grid_.h * grid_.h);
    for (int iy = 0; iy < n; ++iy) {
      int yp = iy + 1 == n ? 0 : iy + 1;
      int ym = iy == 0 ? n - 1 : iy - 1;
      for (int ix = 0; ix < n; ++ix) {
        int xp = ix + 1 == n ? 0 : ix + 1;
        int xm = ix == 0 ? n - 1 : ix - 1;
        int i = grid_.idx(ix, iy);
        double lap = p[grid_.idx(xp, iy)] + p[grid_.idx(xm, iy)] +
                     p[grid_.idx(ix, yp)] + p[grid_.idx(ix, ym)] - 4.0 * p[i];
        out[i] = (1.0 + zeta_) * p[i] - ih2 * lap;
      }
    }
  }

  void cg(const Field& b, Field& x) const {
    const int N = grid_.size;
    x = b;  // warm start at the right-hand side
    Field r(grid_), p(grid_), Ap(grid_);
    apply(x, Ap);
    double rr = 0.0;
    for (int i = 0; i < N; ++i) {
      r[i] = b[i] - Ap[i];
      p[i] = r[i];
      rr += r[i] * r[i];
    }
    double tol2 = cg_tol_ * cg_tol_;
    for (int it = 0; it < 20000 && rr > tol2; ++it) {
      apply(p, Ap);
      double pAp = 0.0;
      for (int i = 0; i < N; ++i) pAp += p[i] * Ap[i];
      double alpha = rr / pAp;
      double rr_new = 0.0;
      for (int i = 0; i < N; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * Ap[i];
        rr_new += r[i] * r[i];
      }
      double beta = rr_new / rr;
      rr = rr_new;
      for (int i = 0; i < N; ++i) p[i] = r[i] + beta * p[i];
    }
    if (rr > tol2) throw LinSolveError("DiffusionSolver: CG did not converge");
  }

  Grid grid_;
  double s_ = 0.0, zeta_ = 0.0, cg_tol_ = 1e-13;
  PeriodicTridiag trid_;
};

}  // namespace mfg
