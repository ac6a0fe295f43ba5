#pragma once

// Periodic uniform-grid fields on the flat torus (1D/2D) and the discrete
// differential operators used throughout: matched one-sided gradient /
// divergence pairs, the compact Laplacian stencil, quadrature and norms.
// The forward gradient and the backward divergence are exact negative
// adjoints in the discrete inner product <f,g> = h^d sum f_i g_i.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

struct GridError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Grid {
  int d = 1;        // dimension, 1 or 2
  int n = 0;        // points per axis
  double h = 0.0;   // spacing, 1/n
  int size = 0;     // n^d

  bool operator==(const Grid&) const = default;

  // node index from per-axis indices (row-major, axis 0 fastest)
  int idx(int ix, int iy = 0) const { return ix + n * iy; }
  double coord(int i) const { return h * i; }

  int wrap(int i) const {
    i %= n;
    return i < 0 ? i + n : i;
  }
};

inline Grid build_grid(int n, int d) {
  if (n < 4) throw GridError("build_grid: n must be >= 4, got " + std::to_string(n));
  if (d != 1 && d != 2) throw GridError("build_grid: d must be 1 or 2, got " + std::to_string(d));
  Grid g;
  g.d = d;
  g.n = n;
  g.h = 1.0 / n;
  g.size = d == 1 ? n : n * n;
  return g;
}

struct Field {
  Grid grid;
  std::vector<double> values;

  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0) : grid(g), values(g.size, fill) {}

  double& operator[](int i) { return values[i]; }
  double operator[](int i) const { return values[i]; }
  int size() const { return grid.size; }
};

struct VectorField {
  Grid grid;
  std::vector<std::vector<double>> comp;  // d arrays of length n^d

  VectorField() = default;
  explicit VectorField(const Grid& g, double fill = 0.0)
      : grid(g), comp(g.d, std::vector<double>(g.size, fill)) {}
};

namespace detail {

// pairwise summation: deterministic and accurate enough for the 1e-12
// conservation contracts
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  size_t half = v.size() / 2;
  return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

inline void check_same_grid(const Grid& a, const Grid& b, const char* who) {
  if (!(a == b)) throw GridError(std::string(who) + ": grids do not match");
}

}  // namespace detail

inline bool all_finite(const Field& f) {
  for (double x : f.values)
    if (!std::isfinite(x)) return false;
  return true;
}

// forward/backward one-sided differences per axis, periodic wrap
inline std::pair<VectorField, VectorField> gradient_pair(const Field& f) {
  const Grid& g = f.grid;
  VectorField fwd(g), bwd(g);
  const double ih = 1.0 / g.h;
  const int n = g.n;
  if (g.d == 1) {
    for (int i = 0; i < n; ++i) {
      int ip = i + 1 == n ? 0 : i + 1;
      int im = i == 0 ? n - 1 : i - 1;
      fwd.comp[0][i] = (f[ip] - f[i]) * ih;
      bwd.comp[0][i] = (f[i] - f[im]) * ih;
    }
  } else {
    for (int iy = 0; iy < n; ++iy) {
      int yp = iy + 1 == n ? 0 : iy + 1;
      int ym = iy == 0 ? n - 1 : iy - 1;
      for (int ix = 0; ix < n; ++ix) {
        int xp = ix + 1 == n ? 0 : ix + 1;
        int xm = ix == 0 ? n - 1 : ix - 1;
        int i = g.idx(ix, iy);
        fwd.comp[0][i] = (f[g.idx(xp, iy)] - f[i]) * ih;
        bwd.comp[0][i] = (f[i] - f[g.idx(xm, iy)]) * ih;
        fwd.comp[1][i] = (f[g.idx(ix, yp)] - f[i]) * ih;
        bwd.comp[1][i] = (f[i] - f[g.idx(ix, ym)]) * ih;
      }
    }
  }
  return {std::move(fwd), std::move(bwd)};
}

// forward gradient alone (the "Du" used in diagnostics)
inline VectorField gradient(const Field& f) { return gradient_pair(f).first; }

// negative adjoint of the forward gradient: per-axis backward differences
inline Field divergence(const VectorField& v) {
  const Grid& g = v.grid;
  if ((int)v.comp.size() != g.d) throw GridError("divergence: component count != d");
  Field out(g);
  const double ih = 1.0 / g.h;
  const int n = g.n;
  if (g.d == 1) {
    const auto& vx = v.comp[0];
    for (int i = 0; i < n; ++i) {
      int im = i == 0 ? n - 1 : i - 1;
      out[i] = (vx[i] - vx[im]) * ih;
    }
  } else {
    for (int iy = 0; iy < n; ++iy) {
      int ym = iy == 0 ? n - 1 : iy - 1;
      for (int ix = 0; ix < n; ++ix) {
        int xm = ix == 0 ? n - 1 : ix - 1;
        int i = g.idx(ix, iy);
        out[i] = (v.comp[0][i] - v.comp[0][g.idx(xm, iy)]) * ih +
                 (v.comp[1][i] - v.comp[1][g.idx(ix, ym)]) * ih;
      }
    }
  }
  return out;
}

// 3-point (1D) / 5-point (2D) periodic stencil; equals divergence(gradient(f))
inline Field laplacian(const Field& f) {
  const Grid& g = f.grid;
  Field out(g);
  const double ih2 = 1.0 / (g.h * g.h);
  const int n = g.n;
  if (g.d == 1) {
    for (int i = 0; i < n; ++i) {
      int ip = i + 1 == n ? 0 : i + 1;
      int im = i == 0 ? n - 1 : i - 1;
      out[i] = (f[ip] - 2.0 * f[i] + f[im]) * ih2;
    }
  } else {
    for (int iy = 0; iy < n; ++iy) {
      int yp = iy + 1 == n ? 0 : iy + 1;
      int ym = iy == 0 ? n - 1 : iy - 1;
      for (int ix = 0; ix < n; ++ix) {
        int xp = ix + 1 == n ? 0 : ix + 1;
        int xm = ix == 0 ? n - 1 : ix - 1;
        int i = g.idx(ix, iy);
        out[i] = (f[g.idx(xp, iy)] + f[g.idx(xm, iy)] + f[g.idx(ix, yp)] +
                  f[g.idx(ix, ym)] - 4.0 * f[i]) * ih2;
      }
    }
  }
  return out;
}

inline double integrate(const Field& f) {
  double cell = f.grid.d == 1 ? f.grid.h : f.grid.h * f.grid.h;
  return cell * detail::pairwise_sum(f.values);
}

enum class Norm { Sup, L1, L2 };

inline double norm(const Field& f, Norm kind) {
  switch (kind) {
    case Norm::Sup: {
      double m = 0.0;
      for (double x : f.values) m = std::max(m, std::abs(x));
      return m;
    }
    case Norm::L1: {
      std::vector<double> a(f.values.size());
      for (size_t i = 0; i < a.size(); ++i) a[i] = std::abs(f.values[i]);
      double cell = f.grid.d == 1 ? f.grid.h : f.grid.h * f.grid.h;
      return cell * detail::pairwise_sum(a);
    }
    case Norm::L2: {
      std::vector<double> a(f.values.size());
      for (size_t i = 0; i < a.size(); ++i) a[i] = f.values[i] * f.values[i];
      double cell = f.grid.d == 1 ? f.grid.h : f.grid.h * f.grid.h;
      return std::sqrt(cell * detail::pairwise_sum(a));
    }
  }
  return 0.0;
}

inline double inner(const Field& a, const Field& b) {
  detail::check_same_grid(a.grid, b.grid, "inner");
  std::vector<double> p(a.values.size());
  for (size_t i = 0; i < p.size(); ++i) p[i] = a.values[i] * b.values[i];
  double cell = a.grid.d == 1 ? a.grid.h : a.grid.h * a.grid.h;
  return cell * detail::pairwise_sum(p);
}

inline double inner(const VectorField& a, const VectorField& b) {
  detail::check_same_grid(a.grid, b.grid, "inner");
  double cell = a.grid.d == 1 ? a.grid.h : a.grid.h * a.grid.h;
  double s = 0.0;
  for (int c = 0; c < a.grid.d; ++c) {
    std::vector<double> p(a.comp[c].size());
    for (size_t i = 0; i < p.size(); ++i) p[i] = a.comp[c][i] * b.comp[c][i];
    s += detail::pairwise_sum(p);
  }
  return cell * s;
}

// elementwise helpers used all over the solvers
inline Field operator+(Field a, const Field& b) {
  detail::check_same_grid(a.grid, b.grid, "operator+");
  for (int i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Field operator-(Field a, const Field& b) {
  detail::check_same_grid(a.grid, b.grid, "operator-");
  for (int i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline Field operator*(double s, Field a) {
  for (double& x : a.values) x *= s;
  return a;
}

inline void axpy(double s, const Field& x, Field& y) {
  detail::check_same_grid(x.grid, y.grid, "axpy");
  for (int i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

inline double sup_dist(const Field& a, const Field& b) {
  detail::check_same_grid(a.grid, b.grid, "sup_dist");
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Field with_zero_mean(Field f) {
  double mean = integrate(f);  // torus has unit volume
  for (double& x : f.values) x -= mean;
  return f;
}

inline double min_value(const Field& f) {
  double m = f.values.empty() ? 0.0 : f.values[0];
  for (double x : f.values) m = std::min(m, x);
  return m;
}

inline double max_value(const Field& f) {
  double m = f.values.empty() ? 0.0 : f.values[0];
  for (double x : f.values) m = std::max(m, x);
  return m;
}

}  // namespace mfg
