#pragma once

// Closed-form Hamiltonian and coupling families with exact derivatives.
// Three Hamiltonians are provided: |p|^2/2, sqrt(1+|p|^2)-1 (globally
// Lipschitz, locally uniformly convex) and |p|^2/2 + V(x). Couplings are
// F(x,m) = f0(x) + c1*m - gamma*m^alpha. Everything the solvers need
// (H, H_p, H_pp, F, F_m, per-ball convexity constants, anti-monotonicity
// margin) is available in closed form.

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfglab/grid.hpp"

namespace mfg {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class HamiltonianFamily { Quadratic, LipschitzConvex, QuadraticPotential };

struct HamiltonianSpec {
  HamiltonianFamily family = HamiltonianFamily::Quadratic;
  // potential sampled on the grid; empty unless family == QuadraticPotential
  Field potential;

  bool has_potential() const { return family == HamiltonianFamily::QuadraticPotential; }

  // radial profile phi(s) with H(x,p) = phi(|p|) + V(x)
  double phi(double s) const {
    if (family == HamiltonianFamily::LipschitzConvex) return std::sqrt(1.0 + s * s) - 1.0;
    return 0.5 * s * s;
  }
  double dphi(double s) const {
    if (family == HamiltonianFamily::LipschitzConvex) return s / std::sqrt(1.0 + s * s);
    return s;
  }
  double d2phi(double s) const {
    if (family == HamiltonianFamily::LipschitzConvex) {
      double q = 1.0 + s * s;
      return 1.0 / (q * std::sqrt(q));
    }
    return 1.0;
  }
  // global Lipschitz bound of H_p if one exists, else 0 (unbounded)
  double global_lip() const {
    return family == HamiltonianFamily::LipschitzConvex ? 1.0 : 0.0;
  }
};

struct HamiltonianEval {
  double H = 0.0;
  std::array<double, 2> Hp{0.0, 0.0};
  std::array<std::array<double, 2>, 2> Hpp{{{0.0, 0.0}, {0.0, 0.0}}};
};

// exact H, H_p, H_pp at a point; x enters only through the potential value
inline HamiltonianEval eval_hamiltonian(const HamiltonianSpec& spec, double Vx,
                                        std::array<double, 2> p, int d) {
  HamiltonianEval e;
  double s2 = p[0] * p[0] + (d == 2 ? p[1] * p[1] : 0.0);
  double s = std::sqrt(s2);
  e.H = spec.phi(s) + (spec.has_potential() ? Vx : 0.0);
  double d1 = spec.dphi(s), d2 = spec.d2phi(s);
  double r = s > 0 ? d1 / s : d2;  // dphi(s)/s -> d2phi(0) as s->0
  for (int a = 0; a < d; ++a) e.Hp[a] = r * p[a];
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double rad = s > 0 ? (d2 - r) * p[a] * p[b] / s2 : 0.0;
      e.Hpp[a][b] = rad + (a == b ? r : 0.0);
    }
  return e;
}

struct ConvexityBounds {
  double L_K = 0.0;      // sup |H_p| on |p| <= K
  double alpha_K = 0.0;  // smallest eigenvalue of H_pp on |p| <= K
  double beta_K = 0.0;   // largest eigenvalue of H_pp on |p| <= K
};

inline ConvexityBounds convexity_bounds(const HamiltonianSpec& spec, double K) {
  if (K < 0) throw ModelError("convexity_bounds: K must be >= 0");
  if (spec.family == HamiltonianFamily::LipschitzConvex) {
    double q = 1.0 + K * K;
    return {K / std::sqrt(q), 1.0 / (q * std::sqrt(q)), 1.0};
  }
  return {K, 1.0, 1.0};
}

// ---------------------------------------------------------------------------
// Couplings F(x,m) = f0(x) + c1*m - gamma*m^alpha
// ---------------------------------------------------------------------------

struct CouplingSpec {
  Field f0;            // spatial base, sampled on the grid (may be empty for 0)
  double c1 = 0.0;     // monotone slope, >= 0
  double gamma = 0.0;  // anti-monotone strength, >= 0
  double alpha = 1.0;  // power, > 0
  double cF = 0.0;     // growth cap used by the case-B monitors

  // density floor for F_m when alpha < 1 (one-sided derivative blows up at 0)
  static constexpr double kDensityFloor = 1e-8;

  double f0_at(int i) const { return f0.values.empty() ? 0.0 : f0.values[i]; }
};

struct CouplingEval {
  double F = 0.0;
  double Fm = 0.0;
};

inline CouplingEval eval_coupling(const CouplingSpec& spec, double f0x, double m) {
  if (m < 0) throw ModelError("eval_coupling: density must be nonnegative, got m=" + std::to_string(m));
  CouplingEval e;
  e.F = f0x + spec.c1 * m - spec.gamma * std::pow(m, spec.alpha);
  double md = spec.alpha < 1.0 ? std::max(m, CouplingSpec::kDensityFloor) : m;
  e.Fm = spec.c1 - spec.gamma * spec.alpha * std::pow(md, spec.alpha - 1.0);
  return e;
}

// gamma* = max(0, -inf F_m) over m in [floor, M_bound]; F(x,m) + g*m is
// nondecreasing there iff g >= gamma*. F_m is x-independent for this catalog
// but the scan is kept exhaustive and cheap.
inline double monotonicity_margin(const CouplingSpec& spec, double M_bound,
                                  int m_samples = 1024) {
  if (M_bound <= 0) throw ModelError("monotonicity_margin: M_bound must be > 0");
  double lo = CouplingSpec::kDensityFloor;
  double inf_fm = std::numeric_limits<double>::infinity();
  for (int k = 0; k < m_samples; ++k) {
    double m = lo + (M_bound - lo) * k / (m_samples - 1);
    double md = spec.alpha < 1.0 ? std::max(m, CouplingSpec::kDensityFloor) : m;
    double fm = spec.c1 - spec.gamma * spec.alpha * std::pow(md, spec.alpha - 1.0);
    inf_fm = std::min(inf_fm, fm);
  }
  return std::max(0.0, -inf_fm);
}

struct TerminalSpec {
  Field u_T;  // terminal cost sampled on the grid
};

// ---------------------------------------------------------------------------
// Monotone upwind numerical Hamiltonian
//
// g(x, p+, p-) = phi(|q|) + V(x) with q the upwind-clipped one-sided
// differences: q collects max(p-_a, 0) and min(p+_a, 0) per axis. The scheme
// derivative dgdp+ is <= 0 and dgdp- >= 0, which is exactly the monotone
// upwinding the kernels and the adjoint Fokker-Planck transport rely on.
// ---------------------------------------------------------------------------

struct UpwindEval {
  double value = 0.0;
  std::array<double, 2> gp{0.0, 0.0};  // d/dp+_a, <= 0
  std::array<double, 2> gm{0.0, 0.0};  // d/dp-_a, >= 0
};

inline UpwindEval upwind_hamiltonian(const HamiltonianSpec& spec, double Vx,
                                     const std::array<double, 2>& pp,
                                     const std::array<double, 2>& pm, int d) {
  UpwindEval e;
  double s2 = 0.0;
  std::array<double, 2> wp{0.0, 0.0}, wm{0.0, 0.0};
  for (int a = 0; a < d; ++a) {
    wp[a] = std::min(pp[a], 0.0);
    wm[a] = std::max(pm[a], 0.0);
    s2 += wp[a] * wp[a] + wm[a] * wm[a];
  }
  double s = std::sqrt(s2);
  e.value = spec.phi(s) + (spec.has_potential() ? Vx : 0.0);
  double r = s > 0 ? spec.dphi(s) / s : spec.d2phi(0.0);
  for (int a = 0; a < d; ++a) {
    e.gp[a] = r * wp[a];
    e.gm[a] = r * wm[a];
  }
  return e;
}

// Hessian of the numerical Hamiltonian in the 2d one-sided arguments, ordered
// [p+_0, .., p+_{d-1}, p-_0, .., p-_{d-1}]. Used by the analytic Newton
// Jacobians and by the theta linear system.
inline void upwind_hessian(const HamiltonianSpec& spec,
                           const std::array<double, 2>& pp,
                           const std::array<double, 2>& pm, int d,
                           double out[4][4]) {
  std::array<double, 4> w{};   // clipped vector
  std::array<int, 4> ind{};    // active-clip indicator
  for (int a = 0; a < d; ++a) {
    w[a] = std::min(pp[a], 0.0);
    ind[a] = pp[a] < 0.0 ? 1 : 0;
    w[d + a] = std::max(pm[a], 0.0);
    ind[d + a] = pm[a] > 0.0 ? 1 : 0;
  }
  double s2 = 0.0;
  for (int r = 0; r < 2 * d; ++r) s2 += w[r] * w[r];
  double s = std::sqrt(s2);
  double r1 = s > 0 ? spec.dphi(s) / s : spec.d2phi(0.0);
  double d2 = spec.d2phi(s);
  for (int r = 0; r < 2 * d; ++r)
    for (int c = 0; c < 2 * d; ++c) {
      double rad = s > 0 ? (d2 - r1) * w[r] * w[c] / s2 : 0.0;
      out[r][c] = ind[r] * ind[c] * (rad + (r == c ? r1 : 0.0));
    }
}

}  // namespace mfg
