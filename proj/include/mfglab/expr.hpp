#pragma once

// Closed expression grammar for spatial data: affine combinations of
// constants, sin/cos of 2 pi k x along an axis, and periodically wrapped
// Gaussian bumps. Small by design; it covers every experiment the harness
// runs without embedding an interpreter.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfglab/grid.hpp"

namespace mfg {

struct ExprError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExprTerm {
  enum class Kind { Const, Sin, Cos, Gauss } kind = Kind::Const;
  double a = 0.0;                      // amplitude
  int k = 1;                           // wavenumber for sin/cos
  int axis = 0;                        // axis for sin/cos
  std::array<double, 2> center{0.5, 0.5};  // gauss center
  double width = 0.1;                  // gauss width
};

using Expr = std::vector<ExprTerm>;

namespace detail_expr {
inline double wrapped_gauss_1d(double x, double c, double w) {
  double s = 0.0;
  for (int j = -3; j <= 3; ++j) {
    double d = x - c + j;
    s += std::exp(-0.5 * d * d / (w * w));
  }
  return s;
}
}  // namespace detail_expr

inline double eval_expr_at(const Expr& e, std::array<double, 2> x, int d) {
  constexpr double two_pi = 2.0 * 3.14159265358979323846;
  double v = 0.0;
  for (const auto& t : e) {
    switch (t.kind) {
      case ExprTerm::Kind::Const:
        v += t.a;
        break;
      case ExprTerm::Kind::Sin:
        v += t.a * std::sin(two_pi * t.k * x[t.axis]);
        break;
      case ExprTerm::Kind::Cos:
        v += t.a * std::cos(two_pi * t.k * x[t.axis]);
        break;
      case ExprTerm::Kind::Gauss: {
        double g = detail_expr::wrapped_gauss_1d(x[0], t.center[0], t.width);
        if (d == 2) g *= detail_expr::wrapped_gauss_1d(x[1], t.center[1], t.width);
        v += t.a * g;
        break;
      }
    }
  }
  return v;
}

inline Field eval_expr(const Expr& e, const Grid& g) {
  Field f(g);
  for (int i = 0; i < g.size; ++i) {
    std::array<double, 2> x{g.coord(i % g.n), g.d == 2 ? g.coord(i / g.n) : 0.0};
    f[i] = eval_expr_at(e, x, g.d);
  }
  return f;
}

inline void validate_expr(const Expr& e, const std::string& where) {
  for (const auto& t : e) {
    if (!std::isfinite(t.a)) throw ExprError(where + ": non-finite amplitude");
    if (t.kind == ExprTerm::Kind::Sin || t.kind == ExprTerm::Kind::Cos) {
      if (t.k < 0 || t.k > 64) throw ExprError(where + ": wavenumber out of range [0,64]");
      if (t.axis != 0 && t.axis != 1) throw ExprError(where + ": axis must be 0 or 1");
    }
    if (t.kind == ExprTerm::Kind::Gauss && !(t.width > 1e-4))
      throw ExprError(where + ": gauss width must be > 1e-4");
  }
}

}  // namespace mfg
