#pragma once

// Coupled solvers: damped-Picard finite horizon, Newton / long-time ergodic,
// Newton discounted stationary, the linear theta system selecting the
// vanishing-discount constant, truncated infinite horizon and discounted
// evolution. All stationary solvers share the same discrete operators as the
// time-stepping kernels, so stationary states are exact fixed points of the
// evolution schemes and the asymptotic studies compare like with like.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfglab/fitting.hpp"
#include "mfglab/grid.hpp"
#include "mfglab/kernels.hpp"
#include "mfglab/models.hpp"

namespace mfg {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MFGProblem {
  Grid grid;
  double kappa = 1.0;
  HamiltonianSpec hamiltonian;
  CouplingSpec coupling;
  TerminalSpec terminal;
  Field m0;

  void validate() const {
    if (kappa <= 0) throw SolverError("MFGProblem: kappa must be > 0");
    if (!(m0.grid == grid)) throw SolverError("MFGProblem: m0 grid mismatch");
    if (!(terminal.u_T.grid == grid)) throw SolverError("MFGProblem: u_T grid mismatch");
    if (min_value(m0) < 0) throw SolverError("MFGProblem: m0 must be nonnegative");
    if (std::abs(integrate(m0) - 1.0) > 1e-12)
      throw SolverError("MFGProblem: m0 must have unit mass");
    if (!all_finite(m0) || !all_finite(terminal.u_T))
      throw SolverError("MFGProblem: non-finite data");
  }

  // F(x, m) sampled on the grid, optionally shifted
  void coupling_source(const Field& m, double shift, Field& out) const {
    out.grid = grid;
    out.values.resize(grid.size);
    for (int i = 0; i < grid.size; ++i) {
      double mi = std::max(m[i], 0.0);  // FP guarantees m >= -1e-12
      out[i] = eval_coupling(coupling, coupling.f0_at(i), mi).F - shift;
    }
  }

  // global bound for |H_p| used by the CFL step choice
  double hp_bound(double grad_bound) const {
    double L = hamiltonian.global_lip();
    return L > 0 ? L : grad_bound;
  }
};

struct SolverConfig {
  double damping = 0.5;          // Picard damping in (0,1]
  double tol = 1e-9;             // fixed-point residual tolerance
  int max_iters = 400;
  bool implicit_scheme = false;  // fully implicit per-frame stepping (1D)
  bool adaptive_damping = true;  // halve damping on residual increase
  bool fictitious_play = false;  // averaged iterates, damping 1/k
  double cfl_grad_bound = 2.0;   // |Du| estimate for quadratic Hamiltonians
  double cfl_safety = 0.9;
  int steps_per_unit = 0;        // 0: derive from the CFL bound
  double newton_tol = 1e-11;
  int newton_max_iters = 50;
  double cross_check_tol = 1e-4;
  double longtime_T = 0.0;       // 0: 40/kappa
  double omega_est = 0.0;        // 0: estimate from a coarse turnpike fit
};

inline int steps_per_unit_for(const MFGProblem& pb, const SolverConfig& cfg) {
  if (cfg.steps_per_unit > 0) return cfg.steps_per_unit;
  double max_hp = pb.hp_bound(cfg.cfl_grad_bound);
  return std::max(1, (int)std::ceil((2.0 * max_hp + 1e-12) / (cfg.cfl_safety * pb.grid.h)));
}

inline TimeGrid time_grid_for(const MFGProblem& pb, double T, const SolverConfig& cfg) {
  int spu = steps_per_unit_for(pb, cfg);
  int Nt = std::max(1, (int)std::llround(T * spu));
  TimeGrid tg = make_time_grid(T, Nt);
  check_cfl(tg, pb.grid.h, pb.hp_bound(cfg.cfl_grad_bound));
  return tg;
}

// ---------------------------------------------------------------------------
// Spec-level kernel entry points on a full problem.
// ---------------------------------------------------------------------------

inline PathField hjb_backward_path(const MFGProblem& pb, const PathField& m_path,
                                   const TimeGrid& tg, double source_shift = 0.0,
                                   double discount = 0.0, const Field* terminal = nullptr,
                                   bool implicit_hamiltonian = false) {
  if ((int)m_path.frames.size() != tg.Nt + 1)
    throw SolverError("hjb_backward_path: m path / time grid mismatch");
  HjbOptions opt;
  opt.discount = discount;
  opt.implicit_hamiltonian = implicit_hamiltonian;
  const Field& uT = terminal ? *terminal : pb.terminal.u_T;
  return hjb_backward_path(pb.kappa, pb.hamiltonian, uT, tg,
                           [&](int k, Field& S) { pb.coupling_source(m_path[k], source_shift, S); },
                           opt);
}

inline PathField fp_forward_path(const MFGProblem& pb, const PathField& u_path,
                                 const TimeGrid& tg, const Field& m0,
                                 bool implicit_transport = false) {
  FpOptions opt;
  opt.implicit_transport = implicit_transport;
  return fp_forward_path(pb.kappa, pb.hamiltonian, u_path, tg, m0, opt);
}

// ---------------------------------------------------------------------------
// Finite-horizon coupled solve (damped Picard).
// ---------------------------------------------------------------------------

struct CoupledOptions {
  double source_shift = 0.0;            // lambda-bar for the shifted v-system
  double discount = 0.0;
  const Field* terminal_override = nullptr;
  const Field* m_seed = nullptr;        // starting density iterate
};

struct FiniteHorizonSolution {
  PathField u_path, m_path;
  int iterations = 0;
  double residual = 0.0;        // last Picard increment, sup over frames
  double hjb_residual = 0.0;    // equation-units residual of the returned pair
  double fp_residual = 0.0;
  double M_bound = 0.0;         // sup m over the cylinder
  double U_bound = 0.0;         // sup |Du| over the cylinder
  bool converged = false;
  std::vector<double> residual_history;
};

inline double path_sup_dist(const PathField& a, const PathField& b) {
  double d = 0.0;
  for (size_t k = 0; k < a.frames.size(); ++k)
    d = std::max(d, sup_dist(a.frames[k], b.frames[k]));
  return d;
}

inline FiniteHorizonSolution solve_finite_horizon(const MFGProblem& pb, double T,
                                                  const SolverConfig& cfg,
                                                  const CoupledOptions& opt = {}) {
  pb.validate();
  TimeGrid tg = time_grid_for(pb, T, cfg);
  const Grid& g = pb.grid;

  PathField m_cur(tg, g);
  const Field& seed = opt.m_seed ? *opt.m_seed : pb.m0;
  for (auto& f : m_cur.frames) f = seed;
  m_cur[0] = pb.m0;

  HjbOptions hjb_opt;
  hjb_opt.discount = opt.discount;
  hjb_opt.implicit_hamiltonian = cfg.implicit_scheme;
  FpOptions fp_opt;
  fp_opt.implicit_transport = cfg.implicit_scheme;
  const Field& uT = opt.terminal_override ? *opt.terminal_override : pb.terminal.u_T;

  auto run_hjb = [&](const PathField& m) {
    return hjb_backward_path(pb.kappa, pb.hamiltonian, uT, tg,
                             [&](int k, Field& S) { pb.coupling_source(m[k], opt.source_shift, S); },
                             hjb_opt);
  };

  FiniteHorizonSolution sol;
  double lambda = cfg.fictitious_play ? 1.0 : cfg.damping;
  double prev_res = std::numeric_limits<double>::infinity();
  PathField u, m_hat;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    if (cfg.fictitious_play) lambda = 1.0 / it;
    u = run_hjb(m_cur);
    m_hat = fp_forward_path(pb.kappa, pb.hamiltonian, u, tg, pb.m0, fp_opt);
    double step = 0.0;
    for (int k = 0; k <= tg.Nt; ++k) {
      Field& mc = m_cur[k];
      const Field& mh = m_hat[k];
      double local = 0.0;
      for (int i = 0; i < g.size; ++i) {
        double next = (1.0 - lambda) * mc[i] + lambda * mh[i];
        local = std::max(local, std::abs(next - mc[i]));
        mc[i] = next;
      }
      step = std::max(step, local);
    }
    sol.iterations = it;
    sol.residual = step;
    sol.residual_history.push_back(step);
    if (step <= cfg.tol) {
      sol.converged = true;
      break;
    }
    if (cfg.adaptive_damping && !cfg.fictitious_play && step > prev_res)
      lambda = std::max(0.5 * lambda, 0.02);
    prev_res = step;
  }

  // final refresh: returned pair is an exact kernel sweep of the last iterate,
  // so the FP residual vanishes by construction and the HJB residual is the
  // coupling mismatch between the last two density iterates
  sol.u_path = run_hjb(m_cur);
  sol.m_path = fp_forward_path(pb.kappa, pb.hamiltonian, sol.u_path, tg, pb.m0, fp_opt);
  Field Sa(g), Sb(g);
  double hres = 0.0;
  for (int k = 0; k <= tg.Nt; ++k) {
    pb.coupling_source(sol.m_path[k], 0.0, Sa);
    pb.coupling_source(m_cur[k], 0.0, Sb);
    hres = std::max(hres, sup_dist(Sa, Sb));
  }
  sol.hjb_residual = hres;
  sol.fp_residual = 0.0;
  for (int k = 0; k <= tg.Nt; ++k) {
    sol.M_bound = std::max(sol.M_bound, max_value(sol.m_path[k]));
    VectorField du = gradient(sol.u_path[k]);
    for (int i = 0; i < g.size; ++i) {
      double s2 = 0.0;
      for (int a = 0; a < g.d; ++a) s2 += du.comp[a][i] * du.comp[a][i];
      sol.U_bound = std::max(sol.U_bound, std::sqrt(s2));
    }
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Dense stationary assembly helpers (shared by the Newton solvers and the
// theta system). Layout conventions are local to each solver.
// ---------------------------------------------------------------------------

namespace stationary {

inline int shift_node(const Grid& g, int i, int axis, int step) {
  int ix = i % g.n, iy = i / g.n;
  if (axis == 0)
    ix = (ix + step + g.n) % g.n;
  else
    iy = (iy + step + g.n) % g.n;
  return g.idx(ix, iy);
}

inline void add_laplacian(Eigen::MatrixXd& M, const Grid& g, int r0, int c0, double coef) {
  const double ih2 = coef / (g.h * g.h);
  for (int i = 0; i < g.size; ++i) {
    M(r0 + i, c0 + i) += -2.0 * g.d * ih2;
    for (int a = 0; a < g.d; ++a) {
      M(r0 + i, c0 + shift_node(g, i, a, +1)) += ih2;
      M(r0 + i, c0 + shift_node(g, i, a, -1)) += ih2;
    }
  }
}

// A (transpose=false) or A^T (transpose=true) of the upwind transport
inline void add_transport(Eigen::MatrixXd& M, const UpwindTransport& t, const Grid& g,
                          int r0, int c0, double coef, bool transpose) {
  const double ih = coef / g.h;
  for (int i = 0; i < g.size; ++i)
    for (int a = 0; a < g.d; ++a) {
      int ip = shift_node(g, i, a, +1);
      int im = shift_node(g, i, a, -1);
      double gp = t.gp(a)[i], gm = t.gm(a)[i];
      if (!transpose) {
        M(r0 + i, c0 + ip) += gp * ih;
        M(r0 + i, c0 + i) += (gm - gp) * ih;
        M(r0 + i, c0 + im) += -gm * ih;
      } else {
        M(r0 + ip, c0 + i) += gp * ih;
        M(r0 + i, c0 + i) += (gm - gp) * ih;
        M(r0 + im, c0 + i) += -gm * ih;
      }
    }
}

// W = d/du [A^T(u) m]: the discrete -div(m H_pp(x,Du) D(.)) block. Assembled
// as G^T diag(m_i Hess_i) G with G the per-node one-sided difference map.
inline void add_curvature(Eigen::MatrixXd& M, const MFGProblem& pb, const Field& u,
                          const Field& m, int r0, int c0, double coef) {
  const Grid& g = u.grid;
  auto [fwd, bwd] = gradient_pair(u);
  const double ih = 1.0 / g.h;
  double hess[4][4];
  // entries of the difference map per one-sided component: (node, weight)
  int cols[4][2];
  double wts[4][2];
  for (int i = 0; i < g.size; ++i) {
    std::array<double, 2> pp{fwd.comp[0][i], g.d == 2 ? fwd.comp[1][i] : 0.0};
    std::array<double, 2> pm{bwd.comp[0][i], g.d == 2 ? bwd.comp[1][i] : 0.0};
    upwind_hessian(pb.hamiltonian, pp, pm, g.d, hess);
    for (int a = 0; a < g.d; ++a) {
      cols[a][0] = shift_node(g, i, a, +1);
      wts[a][0] = ih;
      cols[a][1] = i;
      wts[a][1] = -ih;
      cols[g.d + a][0] = i;
      wts[g.d + a][0] = ih;
      cols[g.d + a][1] = shift_node(g, i, a, -1);
      wts[g.d + a][1] = -ih;
    }
    double mi = coef * m[i];
    for (int r = 0; r < 2 * g.d; ++r)
      for (int s = 0; s < 2 * g.d; ++s) {
        double hs = hess[r][s];
        if (hs == 0.0) continue;
        for (int e1 = 0; e1 < 2; ++e1)
          for (int e2 = 0; e2 < 2; ++e2)
            M(r0 + cols[r][e1], c0 + cols[s][e2]) += mi * hs * wts[r][e1] * wts[s][e2];
      }
  }
}

}  // namespace stationary

// ---------------------------------------------------------------------------
// Stationary ergodic solver.
// ---------------------------------------------------------------------------

enum class ErgodicMethod { Newton, Longtime, CrossValidate };

struct ErgodicSolution {
  double lambda = 0.0;
  Field u, m;
  double res_hjb = 0.0, res_fp = 0.0;
  double cross_check = std::numeric_limits<double>::quiet_NaN();
  int newton_iterations = 0;
  std::string method;
};

namespace detail_ergo {

// residual of the discrete stationary system at (u, m, lambda)
inline void ergodic_residual(const MFGProblem& pb, const Field& u, const Field& m,
                             double lambda, Field& R1, Field& R2) {
  const Grid& g = pb.grid;
  Field gval(g);
  UpwindTransport t = UpwindTransport::from_value(pb.hamiltonian, u, &gval);
  Field lap_u = laplacian(u), lap_m = laplacian(m);
  Field div_m(g);
  t.apply_transpose(m, div_m);
  R1 = Field(g);
  R2 = Field(g);
  for (int i = 0; i < g.size; ++i) {
    double F = eval_coupling(pb.coupling, pb.coupling.f0_at(i), std::max(m[i], 0.0)).F;
    R1[i] = lambda - pb.kappa * lap_u[i] + gval[i] - F;
    R2[i] = -pb.kappa * lap_m[i] + div_m[i];
  }
}

inline double sup_abs(const Field& f) { return norm(f, Norm::Sup); }

}  // namespace detail_ergo

inline ErgodicSolution solve_ergodic_newton(const MFGProblem& pb, const SolverConfig& cfg) {
  pb.validate();
  const Grid& g = pb.grid;
  const int N = g.size;
  const double cell = g.d == 1 ? g.h : g.h * g.h;

  Field u(g, 0.0), m(g, 1.0);
  double lambda = 0.0;
  for (int i = 0; i < N; ++i)
    lambda += eval_coupling(pb.coupling, pb.coupling.f0_at(i), 1.0).F;
  lambda *= cell;

  Field R1(g), R2(g);
  auto total_residual = [&](const Field& uu, const Field& mm, double ll) {
    detail_ergo::ergodic_residual(pb, uu, mm, ll, R1, R2);
    double r = std::max(detail_ergo::sup_abs(R1), detail_ergo::sup_abs(R2));
    r = std::max(r, std::abs(integrate(uu)));
    r = std::max(r, std::abs(integrate(mm) - 1.0));
    return r;
  };

  ErgodicSolution sol;
  sol.method = "newton";
  double res = total_residual(u, m, lambda);
  const int dim = 2 * N + 2;  // [u, m, lambda, zeta]
  Eigen::MatrixXd J(dim, dim);
  Eigen::VectorXd R(dim), delta(dim);
  for (int it = 0; it < cfg.newton_max_iters && res > cfg.newton_tol; ++it) {
    detail_ergo::ergodic_residual(pb, u, m, lambda, R1, R2);
    J.setZero();
    UpwindTransport t = UpwindTransport::from_value(pb.hamiltonian, u);
    stationary::add_laplacian(J, g, 0, 0, -pb.kappa);
    stationary::add_transport(J, t, g, 0, 0, 1.0, false);
    for (int i = 0; i < N; ++i) {
      double Fm = eval_coupling(pb.coupling, pb.coupling.f0_at(i), std::max(m[i], 0.0)).Fm;
      J(i, N + i) -= Fm;
      J(i, 2 * N) = 1.0;        // d R1 / d lambda
      J(N + i, 2 * N + 1) = 1.0;  // dummy multiplier on the singular m-equation
    }
    stationary::add_curvature(J, pb, u, m, N, 0, 1.0);
    stationary::add_laplacian(J, g, N, N, -pb.kappa);
    stationary::add_transport(J, t, g, N, N, 1.0, true);
    for (int i = 0; i < N; ++i) {
      J(2 * N, i) = cell;      // integral of u = 0
      J(2 * N + 1, N + i) = cell;  // integral of m = 1
    }
    for (int i = 0; i < N; ++i) {
      R(i) = R1[i];
      R(N + i) = R2[i];
    }
    R(2 * N) = integrate(u);
    R(2 * N + 1) = integrate(m) - 1.0;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible())
      throw SolverError("solve_ergodic: singular Jacobian (rcond ~ " +
                        std::to_string(lu.rcond()) + ")");
    delta = lu.solve(-R);

    double s = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls, s *= 0.5) {
      Field ut = u, mt = m;
      for (int i = 0; i < N; ++i) {
        ut[i] += s * delta(i);
        mt[i] += s * delta(N + i);
      }
      if (min_value(mt) < -1e-12) continue;
      for (double& x : mt.values) x = std::max(x, 0.0);
      double lt = lambda + s * delta(2 * N);
      double rt = total_residual(ut, mt, lt);
      if (rt < res * (1.0 - 1e-4 * s) || rt <= cfg.newton_tol) {
        u = std::move(ut);
        m = std::move(mt);
        lambda = lt;
        res = rt;
        accepted = true;
        break;
      }
    }
    sol.newton_iterations = it + 1;
    if (!accepted)
      throw SolverError("solve_ergodic: Newton line search stalled at residual " +
                        std::to_string(res));
  }
  if (res > cfg.newton_tol)
    throw SolverError("solve_ergodic: Newton did not reach tolerance, residual " +
                      std::to_string(res));

  // exact normalization (invariant under the scheme: u enters via differences)
  double mu = integrate(u);
  for (double& x : u.values) x -= mu;
  double dm = 1.0 - integrate(m);
  for (double& x : m.values) x += dm;
  if (min_value(m) <= 0)
    throw SolverError("solve_ergodic: stationary density lost positivity");

  detail_ergo::ergodic_residual(pb, u, m, lambda, R1, R2);
  sol.lambda = lambda;
  sol.u = std::move(u);
  sol.m = std::move(m);
  sol.res_hjb = detail_ergo::sup_abs(R1);
  sol.res_fp = detail_ergo::sup_abs(R2);
  return sol;
}

inline ErgodicSolution solve_ergodic_longtime(const MFGProblem& pb, const SolverConfig& cfg) {
  double T = cfg.longtime_T > 0 ? cfg.longtime_T : 40.0 / pb.kappa;
  FiniteHorizonSolution fh = solve_finite_horizon(pb, T, cfg);
  if (!fh.converged)
    throw SolverError("solve_ergodic: long-time finite-horizon solve did not converge");
  const TimeGrid& tg = fh.u_path.tg;
  ErgodicSolution sol;
  sol.method = "longtime";
  sol.m = fh.m_path[tg.Nt / 2];
  sol.u = with_zero_mean(fh.u_path[tg.Nt / 2]);
  // lambda from the time slope of int u over the middle third of the cylinder
  int k0 = tg.Nt / 3, k1 = 2 * tg.Nt / 3;
  std::vector<double> ts, as;
  for (int k = k0; k <= k1; ++k) {
    ts.push_back(fh.u_path.time(k));
    as.push_back(integrate(fh.u_path[k]));
  }
  double mt = 0, ma = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    ma += as[i];
  }
  mt /= ts.size();
  ma /= ts.size();
  double sxx = 0, sxa = 0;
  for (size_t i = 0; i < ts.size(); ++i) {
    sxx += (ts[i] - mt) * (ts[i] - mt);
    sxa += (ts[i] - mt) * (as[i] - ma);
  }
  sol.lambda = -sxa / sxx;
  Field R1, R2;
  detail_ergo::ergodic_residual(pb, sol.u, sol.m, sol.lambda, R1, R2);
  sol.res_hjb = detail_ergo::sup_abs(R1);
  sol.res_fp = detail_ergo::sup_abs(R2);
  return sol;
}

inline ErgodicSolution solve_ergodic(const MFGProblem& pb, ErgodicMethod method,
                                     const SolverConfig& cfg) {
  switch (method) {
    case ErgodicMethod::Newton:
      return solve_ergodic_newton(pb, cfg);
    case ErgodicMethod::Longtime:
      return solve_ergodic_longtime(pb, cfg);
    case ErgodicMethod::CrossValidate: {
      ErgodicSolution a = solve_ergodic_newton(pb, cfg);
      ErgodicSolution b = solve_ergodic_longtime(pb, cfg);
      a.cross_check = std::abs(a.lambda - b.lambda);
      if (a.cross_check > cfg.cross_check_tol)
        throw SolverError("solve_ergodic: methods disagree, |dlambda| = " +
                          std::to_string(a.cross_check));
      a.method = "cross-validated";
      return a;
    }
  }
  throw SolverError("solve_ergodic: bad method");
}

// ---------------------------------------------------------------------------
// Discounted stationary solver (Newton).
// ---------------------------------------------------------------------------

struct DiscountedSolution {
  double delta = 0.0;
  Field u, m;
  double res_hjb = 0.0, res_fp = 0.0;
  int newton_iterations = 0;
};

inline DiscountedSolution solve_discounted_stationary(const MFGProblem& pb, double delta,
                                                      const SolverConfig& cfg) {
  pb.validate();
  if (delta <= 0) throw SolverError("solve_discounted_stationary: delta must be > 0");
  const Grid& g = pb.grid;
  const int N = g.size;
  const double cell = g.d == 1 ? g.h : g.h * g.h;

  Field u(g), m(g, 1.0);
  for (int i = 0; i < N; ++i)
    u[i] = eval_coupling(pb.coupling, pb.coupling.f0_at(i), 1.0).F / delta;

  Field R1(g), R2(g);
  auto eval_res = [&](const Field& uu, const Field& mm) {
    Field gval(g);
    UpwindTransport t = UpwindTransport::from_value(pb.hamiltonian, uu, &gval);
    Field lap_u = laplacian(uu), lap_m = laplacian(mm);
    Field div_m(g);
    t.apply_transpose(mm, div_m);
    for (int i = 0; i < N; ++i) {
      double F = eval_coupling(pb.coupling, pb.coupling.f0_at(i), std::max(mm[i], 0.0)).F;
      R1[i] = delta * uu[i] - pb.kappa * lap_u[i] + gval[i] - F;
      R2[i] = -pb.kappa * lap_m[i] + div_m[i];
    }
    double r = std::max(norm(R1, Norm::Sup), norm(R2, Norm::Sup));
    return std::max(r, std::abs(integrate(mm) - 1.0));
  };

  DiscountedSolution sol;
  sol.delta = delta;
  double res = eval_res(u, m);
  const int dim = 2 * N + 1;  // [u, m, zeta]
  Eigen::MatrixXd J(dim, dim);
  Eigen::VectorXd R(dim), step(dim);
  for (int it = 0; it < cfg.newton_max_iters && res > cfg.newton_tol; ++it) {
    eval_res(u, m);
    J.setZero();
    UpwindTransport t = UpwindTransport::from_value(pb.hamiltonian, u);
    stationary::add_laplacian(J, g, 0, 0, -pb.kappa);
    stationary::add_transport(J, t, g, 0, 0, 1.0, false);
    for (int i = 0; i < N; ++i) {
      J(i, i) += delta;
      double Fm = eval_coupling(pb.coupling, pb.coupling.f0_at(i), std::max(m[i], 0.0)).Fm;
      J(i, N + i) -= Fm;
      J(N + i, 2 * N) = 1.0;
    }
    stationary::add_curvature(J, pb, u, m, N, 0, 1.0);
    stationary::add_laplacian(J, g, N, N, -pb.kappa);
    stationary::add_transport(J, t, g, N, N, 1.0, true);
    for (int i = 0; i < N; ++i) J(2 * N, N + i) = cell;
    for (int i = 0; i < N; ++i) {
      R(i) = R1[i];
      R(N + i) = R2[i];
    }
    R(2 * N) = integrate(m) - 1.0;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
    if (!lu.isInvertible())
      throw SolverError("solve_discounted_stationary: singular Jacobian (rcond ~ " +
                        std::to_string(lu.rcond()) + ")");
    step = lu.solve(-R);

    double s = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls, s *= 0.5) {
      Field ut = u, mt = m;
      for (int i = 0; i < N; ++i) {
        ut[i] += s * step(i);
        mt[i] += s * step(N + i);
      }
      if (min_value(mt) < -1e-12) continue;
      for (double& x : mt.values) x = std::max(x, 0.0);
      double rt = eval_res(ut, mt);
      if (rt < res * (1.0 - 1e-4 * s) || rt <= cfg.newton_tol) {
        u = std::move(ut);
        m = std::move(mt);
        res = rt;
        accepted = true;
        break;
      }
    }
    sol.newton_iterations = it + 1;
    if (!accepted)
      throw SolverError("solve_discounted_stationary: line search stalled at residual " +
                        std::to_string(res));
  }
  if (res > cfg.newton_tol)
    throw SolverError("solve_discounted_stationary: Newton did not converge, residual " +
                      std::to_string(res));
  double dm = 1.0 - integrate(m);
  for (double& x : m.values) x += dm;
  eval_res(u, m);
  sol.u = std::move(u);
  sol.m = std::move(m);
  sol.res_hjb = norm(R1, Norm::Sup);
  sol.res_fp = norm(R2, Norm::Sup);
  return sol;
}

// ---------------------------------------------------------------------------
// Theta system: the linear stationary problem selecting the additive constant
// of the vanishing-discount limit. Unknowns (w, rho, theta) with zero-mean
// constraints on w and rho; solved directly.
// ---------------------------------------------------------------------------

struct ThetaSolution {
  double theta = 0.0;
  Field w, rho;
  double residual = 0.0;
};

inline ThetaSolution solve_theta(const MFGProblem& pb, const ErgodicSolution& erg,
                                 const SolverConfig& cfg) {
  (void)cfg;
  const Grid& g = pb.grid;
  const int N = g.size;
  const double cell = g.d == 1 ? g.h : g.h * g.h;
  if (min_value(erg.m) < CouplingSpec::kDensityFloor && pb.coupling.alpha < 1.0)
    throw SolverError("solve_theta: stationary density below the F_m floor");

  UpwindTransport t = UpwindTransport::from_value(pb.hamiltonian, erg.u);
  const int dim = 2 * N + 2;  // [w, rho, theta, zeta]
  Eigen::MatrixXd M(dim, dim);
  Eigen::VectorXd b(dim);
  M.setZero();
  b.setZero();
  // E1: theta + u - kappa Lap w + A(u) w - F_m(m) rho = 0
  stationary::add_laplacian(M, g, 0, 0, -pb.kappa);
  stationary::add_transport(M, t, g, 0, 0, 1.0, false);
  for (int i = 0; i < N; ++i) {
    double Fm = eval_coupling(pb.coupling, pb.coupling.f0_at(i), std::max(erg.m[i], 0.0)).Fm;
    M(i, N + i) -= Fm;
    M(i, 2 * N) = 1.0;
    b(i) = -erg.u[i];
    M(N + i, 2 * N + 1) = 1.0;
  }
  // E2: -kappa Lap rho + A^T(u) rho + W(u, m) w = 0
  stationary::add_curvature(M, pb, erg.u, erg.m, N, 0, 1.0);
  stationary::add_laplacian(M, g, N, N, -pb.kappa);
  stationary::add_transport(M, t, g, N, N, 1.0, true);
  for (int i = 0; i < N; ++i) {
    M(2 * N, i) = cell;
    M(2 * N + 1, N + i) = cell;
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
  if (!lu.isInvertible())
    throw SolverError("solve_theta: singular linear system (rcond ~ " +
                      std::to_string(lu.rcond()) + "); smallness regime violated");
  Eigen::VectorXd x = lu.solve(b);

  ThetaSolution sol;
  sol.w = Field(g);
  sol.rho = Field(g);
  for (int i = 0; i < N; ++i) {
    sol.w[i] = x(i);
    sol.rho[i] = x(N + i);
  }
  sol.theta = x(2 * N);
  sol.residual = (M * x - b).cwiseAbs().maxCoeff();
  return sol;
}

// ---------------------------------------------------------------------------
// Rate estimation and the truncated infinite-horizon / discounted evolution.
// ---------------------------------------------------------------------------

inline double grad_sup_dist(const Field& a, const Field& b) {
  VectorField ga = gradient(a), gb = gradient(b);
  double d = 0.0;
  for (int c = 0; c < a.grid.d; ++c)
    for (int i = 0; i < a.grid.size; ++i)
      d = std::max(d, std::abs(ga.comp[c][i] - gb.comp[c][i]));
  return d;
}

// distance profile d(t) = |m(t) - m_ref|_inf + |Du(t) - Du_ref|_inf
inline std::vector<double> distance_profile(const PathField& u, const PathField& m,
                                            const Field& u_ref, const Field& m_ref) {
  std::vector<double> d(u.frames.size());
  for (size_t k = 0; k < u.frames.size(); ++k)
    d[k] = sup_dist(m.frames[k], m_ref) + grad_sup_dist(u.frames[k], u_ref);
  return d;
}

// coarse one-sided fit of the relaxation rate toward the stationary state
inline double estimate_turnpike_rate(const MFGProblem& pb, const ErgodicSolution& erg,
                                     const SolverConfig& cfg) {
  double prior = 4.0 * M_PI * M_PI * pb.kappa;
  SolverConfig coarse = cfg;
  coarse.tol = std::max(cfg.tol, 1e-8);
  double T_pre = std::max(0.5, 20.0 / prior);
  FiniteHorizonSolution fh;
  try {
    fh = solve_finite_horizon(pb, T_pre, coarse);
  } catch (const std::exception&) {
    return prior;
  }
  if (!fh.converged) return prior;
  std::vector<double> d = distance_profile(fh.u_path, fh.m_path, erg.u, erg.m);
  std::vector<double> ts(d.size());
  for (size_t k = 0; k < d.size(); ++k) ts[k] = fh.u_path.time(k);
  // truncate the plateau past the minimum: only the decaying prefix is signal
  size_t cut = std::min_element(d.begin(), d.end()) - d.begin();
  if (cut < 8) return prior;
  ts.resize(cut + 1);
  d.resize(cut + 1);
  double floor = std::max(1e-12, 5.0 * d.back());
  try {
    ExpFit fit = fit_exponential(ts, d, ExpModel::OneSided, 0.0, floor);
    if (fit.rate > 0 && std::isfinite(fit.rate)) return fit.rate;
  } catch (const FitError&) {
  }
  return prior;
}

struct InfiniteHorizonSolution {
  PathField v_path, mu_path;
  std::vector<double> tail_average;  // a(t) = int v(t) per frame
  double c_bar = 0.0;
  bool tail_flat = false;
  double T_trunc = 0.0;
  FiniteHorizonSolution fh;
};

inline InfiniteHorizonSolution solve_infinite_horizon(const MFGProblem& pb, double T_trunc,
                                                      const ErgodicSolution& erg,
                                                      const SolverConfig& cfg) {
  double omega = cfg.omega_est > 0 ? cfg.omega_est : estimate_turnpike_rate(pb, erg, cfg);
  if (T_trunc <= 0) T_trunc = std::max(1.0, 1.5 * std::log(1e8) / omega);
  if (T_trunc < 10.0 / omega)
    throw SolverError("solve_infinite_horizon: T_trunc below 10/omega_est");

  CoupledOptions opt;
  opt.source_shift = erg.lambda;
  opt.terminal_override = &erg.u;
  InfiniteHorizonSolution sol;
  sol.T_trunc = T_trunc;
  sol.fh = solve_finite_horizon(pb, T_trunc, cfg, opt);
  sol.v_path = std::move(sol.fh.u_path);
  sol.mu_path = std::move(sol.fh.m_path);
  sol.fh.u_path = PathField();
  sol.fh.m_path = PathField();

  const TimeGrid& tg = sol.v_path.tg;
  sol.tail_average.resize(tg.Nt + 1);
  for (int k = 0; k <= tg.Nt; ++k) sol.tail_average[k] = integrate(sol.v_path[k]);
  int k_tail0 = (int)std::floor(0.9 * tg.Nt);
  double acc = 0.0;
  for (int k = k_tail0; k <= tg.Nt; ++k) acc += sol.tail_average[k];
  sol.c_bar = acc / (tg.Nt - k_tail0 + 1);
  sol.tail_flat =
      std::abs(sol.tail_average[k_tail0] - sol.tail_average[tg.Nt]) <= 10.0 * cfg.tol;
  return sol;
}

struct DiscountedEvolution {
  PathField u_path, m_path;
  DiscountedSolution stationary;
  std::vector<double> times, decay_profile;  // |m - m_d| + |Du - Du_d| per frame
  double fitted_rate = 0.0;
  bool converged = false;
  int iterations = 0;
};

inline DiscountedEvolution solve_discounted_evolution(const MFGProblem& pb, double delta,
                                                      double T_trunc, const SolverConfig& cfg) {
  DiscountedEvolution ev;
  ev.stationary = solve_discounted_stationary(pb, delta, cfg);
  CoupledOptions opt;
  opt.discount = delta;
  opt.terminal_override = &ev.stationary.u;
  FiniteHorizonSolution fh = solve_finite_horizon(pb, T_trunc, cfg, opt);
  ev.converged = fh.converged;
  ev.iterations = fh.iterations;
  ev.u_path = std::move(fh.u_path);
  ev.m_path = std::move(fh.m_path);
  ev.decay_profile = distance_profile(ev.u_path, ev.m_path, ev.stationary.u, ev.stationary.m);
  ev.times.resize(ev.decay_profile.size());
  for (size_t k = 0; k < ev.times.size(); ++k) ev.times[k] = ev.u_path.time(k);
  // fit the relaxation rate on the decaying prefix
  size_t cut = std::min_element(ev.decay_profile.begin(), ev.decay_profile.end()) -
               ev.decay_profile.begin();
  if (cut >= 8) {
    std::vector<double> ts(ev.times.begin(), ev.times.begin() + cut + 1);
    std::vector<double> ds(ev.decay_profile.begin(), ev.decay_profile.begin() + cut + 1);
    double floor = std::max(1e-12, 5.0 * ds.back());
    try {
      ev.fitted_rate = fit_exponential(ts, ds, ExpModel::OneSided, 0.0, floor).rate;
    } catch (const FitError&) {
    }
  }
  return ev;
}

}  // namespace mfg
