#pragma once

// Time-stepping kernels. Diffusion is implicit, the monotone upwind
// Hamiltonian is explicit (optionally implicit via a per-frame Newton step in
// 1D). The Fokker-Planck transport is the exact transpose of the linearized
// HJB advection, evaluated in flux form so that mass telescopes; this makes
// the discrete duality identity hold at the operator level, which the
// diagnostics in the lab exploit.

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfglab/grid.hpp"
#include "mfglab/linsolve.hpp"
#include "mfglab/models.hpp"
#include "mfglab/rng.hpp"

namespace mfg {

struct KernelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TimeGrid {
  double T = 0.0;
  int Nt = 0;
  double dt = 0.0;
};

inline TimeGrid make_time_grid(double T, int Nt) {
  if (T <= 0 || Nt < 1) throw KernelError("make_time_grid: need T > 0 and Nt >= 1");
  return {T, Nt, T / Nt};
}

// advective stability bound dt <= h / (2 max|H_p| + eps) for the
// semi-implicit scheme
inline void check_cfl(const TimeGrid& tg, double h, double max_hp) {
  double bound = h / (2.0 * max_hp + 1e-12);
  if (tg.dt > bound * (1.0 + 1e-12))
    throw KernelError("time grid violates CFL: dt=" + std::to_string(tg.dt) +
                      " > " + std::to_string(bound));
}

inline TimeGrid cfl_time_grid(double T, double h, double max_hp, double safety = 0.95) {
  double dt_max = safety * h / (2.0 * max_hp + 1e-12);
  int Nt = std::max(1, (int)std::ceil(T / dt_max - 1e-12));
  return make_time_grid(T, Nt);
}

struct PathField {
  TimeGrid tg;
  std::vector<Field> frames;  // Nt + 1

  PathField() = default;
  PathField(const TimeGrid& t, const Grid& g) : tg(t), frames(t.Nt + 1, Field(g)) {}

  Field& operator[](int k) { return frames[k]; }
  const Field& operator[](int k) const { return frames[k]; }
  double time(int k) const { return k * tg.dt; }
  int steps() const { return tg.Nt; }
};

namespace detail {
inline void ensure_finite(const Field& f, const char* what, int frame) {
  for (double x : f.values)
    if (!std::isfinite(x))
      throw KernelError(std::string(what) + ": non-finite value at frame " +
                        std::to_string(frame));
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Upwind transport operator.
//
// A phi = sum_a [ gp_a D+_a phi + gm_a D-_a phi ]   with gp <= 0 <= gm.
// Built either from a drift field (sign splitting) or from a value function
// (derivatives of the upwind numerical Hamiltonian). apply_transpose is the
// flux-difference form of A^T, the discrete div(m H_p(x,Du)).
// ---------------------------------------------------------------------------

class UpwindTransport {
 public:
  static UpwindTransport from_drift(const VectorField& b) {
    UpwindTransport t;
    t.grid_ = b.grid;
    for (int a = 0; a < b.grid.d; ++a) {
      t.gp_[a].resize(b.grid.size);
      t.gm_[a].resize(b.grid.size);
      for (int i = 0; i < b.grid.size; ++i) {
        t.gp_[a][i] = std::min(b.comp[a][i], 0.0);
        t.gm_[a][i] = std::max(b.comp[a][i], 0.0);
      }
    }
    return t;
  }

  // coefficients from the value function; optionally also returns the upwind
  // numerical Hamiltonian values g(x, D+u, D-u)
  static UpwindTransport from_value(const HamiltonianSpec& H, const Field& u,
                                    Field* gvalue = nullptr) {
    UpwindTransport t;
    const Grid& g = u.grid;
    t.grid_ = g;
    auto [fwd, bwd] = gradient_pair(u);
    for (int a = 0; a < g.d; ++a) {
      t.gp_[a].resize(g.size);
      t.gm_[a].resize(g.size);
    }
    if (gvalue) *gvalue = Field(g);
    for (int i = 0; i < g.size; ++i) {
      std::array<double, 2> pp{fwd.comp[0][i], g.d == 2 ? fwd.comp[1][i] : 0.0};
      std::array<double, 2> pm{bwd.comp[0][i], g.d == 2 ? bwd.comp[1][i] : 0.0};
      double Vx = H.has_potential() ? H.potential[i] : 0.0;
      UpwindEval e = upwind_hamiltonian(H, Vx, pp, pm, g.d);
      for (int a = 0; a < g.d; ++a) {
        t.gp_[a][i] = e.gp[a];
        t.gm_[a][i] = e.gm[a];
      }
      if (gvalue) (*gvalue)[i] = e.value;
    }
    return t;
  }

  const Grid& grid() const { return grid_; }
  const std::vector<double>& gp(int axis) const { return gp_[axis]; }
  const std::vector<double>& gm(int axis) const { return gm_[axis]; }

  void apply(const Field& phi, Field& out) const {
    detail::check_same_grid(phi.grid, grid_, "UpwindTransport::apply");
    out.grid = grid_;
    out.values.assign(grid_.size, 0.0);
    const int n = grid_.n;
    const double ih = 1.0 / grid_.h;
    for (int a = 0; a < grid_.d; ++a) {
      const int stride = a == 0 ? 1 : n;
      for (int iy = 0; iy < (grid_.d == 2 ? n : 1); ++iy)
        for (int ix = 0; ix < n; ++ix) {
          int i = grid_.idx(ix, iy);
          int along = a == 0 ? ix : iy;
          int inext = along + 1 == n ? i - (n - 1) * stride : i + stride;
          int iprev = along == 0 ? i + (n - 1) * stride : i - stride;
          out[i] += gp_[a][i] * (phi[inext] - phi[i]) * ih +
                    gm_[a][i] * (phi[i] - phi[iprev]) * ih;
        }
    }
  }

  // (A^T m)_j as flux differences; exactly mass-telescoping
  void apply_transpose(const Field& m, Field& out) const {
    detail::check_same_grid(m.grid, grid_, "UpwindTransport::apply_transpose");
    out.grid = grid_;
    out.values.assign(grid_.size, 0.0);
    const int n = grid_.n;
    const double ih = 1.0 / grid_.h;
    std::vector<double> flux(grid_.size);
    for (int a = 0; a < grid_.d; ++a) {
      const int stride = a == 0 ? 1 : n;
      for (int iy = 0; iy < (grid_.d == 2 ? n : 1); ++iy)
        for (int ix = 0; ix < n; ++ix) {
          int i = grid_.idx(ix, iy);
          int along = a == 0 ? ix : iy;
          int inext = along + 1 == n ? i - (n - 1) * stride : i + stride;
          flux[i] = gp_[a][i] * m[i] + gm_[a][inext] * m[inext];
        }
      for (int iy = 0; iy < (grid_.d == 2 ? n : 1); ++iy)
        for (int ix = 0; ix < n; ++ix) {
          int i = grid_.idx(ix, iy);
          int along = a == 0 ? ix : iy;
          int iprev = along == 0 ? i + (n - 1) * stride : i - stride;
          out[i] += (flux[iprev] - flux[i]) * ih;
        }
    }
  }

  // max over nodes of sum_a (gm - gp); the CFL speed of the explicit step
  double max_speed() const {
    double s = 0.0;
    for (int i = 0; i < grid_.size; ++i) {
      double loc = 0.0;
      for (int a = 0; a < grid_.d; ++a) loc += gm_[a][i] - gp_[a][i];
      s = std::max(s, loc);
    }
    return s;
  }

 private:
  Grid grid_;
  std::array<std::vector<double>, 2> gp_, gm_;
};

// worst relative defect of <A phi, psi> = <phi, A^T psi> over random fields
inline double adjointness_check(const VectorField& drift, int trials,
                                uint64_t seed = 12345) {
  if (trials < 1) throw KernelError("adjointness_check: trials must be >= 1");
  UpwindTransport t = UpwindTransport::from_drift(drift);
  const Grid& g = drift.grid;
  Rng rng(seed);
  double worst = 0.0;
  Field phi(g), psi(g), Aphi(g), Atpsi(g);
  for (int k = 0; k < trials; ++k) {
    for (int i = 0; i < g.size; ++i) {
      phi[i] = rng.uniform(-1.0, 1.0);
      psi[i] = rng.uniform(-1.0, 1.0);
    }
    t.apply(phi, Aphi);
    t.apply_transpose(psi, Atpsi);
    double lhs = inner(Aphi, psi), rhs = inner(phi, Atpsi);
    double scale = norm(Aphi, Norm::L2) * norm(psi, Norm::L2) +
                   norm(phi, Norm::L2) * norm(Atpsi, Norm::L2) + 1e-300;
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Backward HJB sweep:  -u_t + delta u - kappa Lap u + g(x,D+u,D-u) = S(t)
// with u(T) given. S is supplied per frame (the coupled solvers feed
// F(x, m(t)) - shift). Semi-implicit by default; implicit_hamiltonian solves
// each frame by a damped Newton iteration (1D only).
// ---------------------------------------------------------------------------

struct HjbOptions {
  double discount = 0.0;
  bool implicit_hamiltonian = false;
  double newton_tol = 1e-12;
  int newton_max_iter = 30;
};

inline PathField hjb_backward_path(double kappa, const HamiltonianSpec& H,
                                   const Field& u_T, const TimeGrid& tg,
                                   const std::function<void(int, Field&)>& source_at,
                                   const HjbOptions& opt = {}) {
  const Grid& g = u_T.grid;
  const double dt = tg.dt;
  PathField u(tg, g);
  u[tg.Nt] = u_T;
  detail::ensure_finite(u[tg.Nt], "hjb_backward_path", tg.Nt);
  DiffusionSolver heat(g, kappa * dt, opt.discount * dt);
  Field S(g), gval(g), rhs(g);
  if (opt.implicit_hamiltonian && g.d != 1)
    throw KernelError("hjb_backward_path: implicit Hamiltonian stepping is 1D only");
  const double ih = 1.0 / g.h, ih2 = 1.0 / (g.h * g.h);
  for (int k = tg.Nt - 1; k >= 0; --k) {
    source_at(k + 1, S);
    if (!opt.implicit_hamiltonian) {
      UpwindTransport::from_value(H, u[k + 1], &gval);
      for (int i = 0; i < g.size; ++i) rhs[i] = u[k + 1][i] + dt * (S[i] - gval[i]);
      heat.solve(rhs, u[k]);
    } else {
      // damped Newton on G(w) = (1+delta dt) w - kappa dt L w + dt g(D+-w)
      //                          - u^{k+1} - dt S
      Field w = u[k + 1];
      for (int it = 0;; ++it) {
        UpwindTransport t = UpwindTransport::from_value(H, w, &gval);
        Field lap = laplacian(w);
        Field G(g);
        double gn = 0.0;
        for (int i = 0; i < g.size; ++i) {
          G[i] = (1.0 + opt.discount * dt) * w[i] - kappa * dt * lap[i] +
                 dt * gval[i] - u[k + 1][i] - dt * S[i];
          gn = std::max(gn, std::abs(G[i]));
        }
        if (gn <= opt.newton_tol) break;
        if (it >= opt.newton_max_iter)
          throw KernelError("hjb_backward_path: implicit Newton stalled at frame " +
                            std::to_string(k));
        // Jacobian: (1+delta dt) I - kappa dt L + dt A(w), periodic tridiagonal
        std::vector<double> a(g.n), b(g.n), c(g.n);
        for (int i = 0; i < g.n; ++i) {
          double gp = t.gp(0)[i], gm = t.gm(0)[i];
          a[i] = -kappa * dt * ih2 - dt * gm * ih;
          c[i] = -kappa * dt * ih2 + dt * gp * ih;
          b[i] = 1.0 + opt.discount * dt + 2.0 * kappa * dt * ih2 + dt * (gm - gp) * ih;
        }
        PeriodicTridiag J(std::move(a), std::move(b), std::move(c));
        std::vector<double> step(g.n);
        J.solve(G.values, step);
        for (int i = 0; i < g.n; ++i) w[i] -= step[i];
      }
      u[k] = std::move(w);
    }
    detail::ensure_finite(u[k], "hjb_backward_path", k);
  }
  return u;
}

// ---------------------------------------------------------------------------
// Forward Fokker-Planck sweep: m_t - kappa Lap m - div(m H_p(x,Du)) = 0.
// The transport is apply_transpose of the HJB upwind linearization at the
// same frame. Mass is conserved exactly up to a uniform roundoff correction
// per step; positivity is monotone under the CFL bound.
// ---------------------------------------------------------------------------

struct FpOptions {
  bool implicit_transport = false;  // 1D only
  bool positivity_check = true;
  double mass_tol = 1e-12;
  double negativity_tol = -1e-12;
};

inline PathField fp_forward_path(double kappa, const HamiltonianSpec& H,
                                 const PathField& u_path, const TimeGrid& tg,
                                 const Field& m0, const FpOptions& opt = {}) {
  const Grid& g = m0.grid;
  const double dt = tg.dt;
  if ((int)u_path.frames.size() != tg.Nt + 1)
    throw KernelError("fp_forward_path: u path / time grid mismatch");
  PathField m(tg, g);
  m[0] = m0;
  const double mass0 = integrate(m0);
  DiffusionSolver heat(g, kappa * dt);
  if (opt.implicit_transport && g.d != 1)
    throw KernelError("fp_forward_path: implicit transport is 1D only");
  const double ih = 1.0 / g.h, ih2 = 1.0 / (g.h * g.h);
  Field w(g), trans(g);
  for (int k = 0; k < tg.Nt; ++k) {
    UpwindTransport t = UpwindTransport::from_value(H, u_path[k + 1]);
    if (!opt.implicit_transport) {
      double speed = t.max_speed();
      if (dt * speed * ih > 1.0 + 1e-9)
        throw KernelError("fp_forward_path: CFL violated at frame " + std::to_string(k) +
                          " (speed " + std::to_string(speed) + ")");
      t.apply_transpose(m[k], trans);
      for (int i = 0; i < g.size; ++i) w[i] = m[k][i] - dt * trans[i];
      heat.solve(w, m[k + 1]);
    } else {
      // (I - kappa dt L + dt A^T) m^{k+1} = m^k
      std::vector<double> a(g.n), b(g.n), c(g.n);
      for (int i = 0; i < g.n; ++i) {
        int ip = i + 1 == g.n ? 0 : i + 1;
        int im = i == 0 ? g.n - 1 : i - 1;
        a[i] = -kappa * dt * ih2 - dt * t.gp(0)[im] * ih;
        c[i] = -kappa * dt * ih2 + dt * t.gm(0)[ip] * ih;
        b[i] = 1.0 + 2.0 * kappa * dt * ih2 + dt * (t.gm(0)[i] - t.gp(0)[i]) * ih;
      }
      PeriodicTridiag A(std::move(a), std::move(b), std::move(c));
      A.solve(m[k].values, m[k + 1].values);
      m[k + 1].grid = g;
    }
    // uniform correction of the linear-solver mass roundoff
    double drift = mass0 - integrate(m[k + 1]);
    for (double& x : m[k + 1].values) x += drift;
    detail::ensure_finite(m[k + 1], "fp_forward_path", k + 1);
    if (std::abs(integrate(m[k + 1]) - mass0) > opt.mass_tol)
      throw KernelError("fp_forward_path: mass drift at frame " + std::to_string(k + 1));
    if (opt.positivity_check && min_value(m[k + 1]) < opt.negativity_tol)
      throw KernelError("fp_forward_path: negative density at frame " +
                        std::to_string(k + 1) + " (min " +
                        std::to_string(min_value(m[k + 1])) + ")");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Standalone linear kernels for the decay-estimate harness.
// ---------------------------------------------------------------------------

// -v_t - kappa Lap v + Dv . V = f, v(T) = v_T
inline PathField linear_parabolic_backward(double kappa, const VectorField& V,
                                           const PathField* f, const Field& v_T,
                                           const TimeGrid& tg) {
  const Grid& g = v_T.grid;
  const double dt = tg.dt;
  UpwindTransport t = UpwindTransport::from_drift(V);
  DiffusionSolver heat(g, kappa * dt);
  PathField v(tg, g);
  v[tg.Nt] = v_T;
  Field adv(g), rhs(g);
  for (int k = tg.Nt - 1; k >= 0; --k) {
    t.apply(v[k + 1], adv);
    for (int i = 0; i < g.size; ++i) {
      double fi = f ? (*f)[k + 1][i] : 0.0;
      rhs[i] = v[k + 1][i] + dt * (fi - adv[i]);
    }
    heat.solve(rhs, v[k]);
    detail::ensure_finite(v[k], "linear_parabolic_backward", k);
  }
  return v;
}

// rho_t - kappa Lap rho - div(rho V) = div(Fflux), rho(0) = rho0 (signed)
inline PathField linear_fp_forward(double kappa, const VectorField& V,
                                   const VectorField* Fflux, const Field& rho0,
                                   const TimeGrid& tg) {
  const Grid& g = rho0.grid;
  const double dt = tg.dt;
  UpwindTransport t = UpwindTransport::from_drift(V);
  if (dt * t.max_speed() / g.h > 1.0 + 1e-9)
    throw KernelError("linear_fp_forward: CFL violated for given drift");
  DiffusionSolver heat(g, kappa * dt);
  PathField rho(tg, g);
  rho[0] = rho0;
  const double mass0 = integrate(rho0);
  Field trans(g), w(g);
  Field src(g);
  if (Fflux) src = divergence(*Fflux);
  for (int k = 0; k < tg.Nt; ++k) {
    t.apply_transpose(rho[k], trans);
    for (int i = 0; i < g.size; ++i)
      w[i] = rho[k][i] - dt * trans[i] + (Fflux ? dt * src[i] : 0.0);
    heat.solve(w, rho[k + 1]);
    double drift = mass0 - integrate(rho[k + 1]);
    for (double& x : rho[k + 1].values) x += drift;
    detail::ensure_finite(rho[k + 1], "linear_fp_forward", k + 1);
  }
  return rho;
}

}  // namespace mfg
