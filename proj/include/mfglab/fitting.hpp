#pragma once

// Log-space least-squares fits of exponential decay profiles, one-sided
// (C e^{-rate t}) and two-sided symmetric (M (e^{-w t} + e^{-w (T-t)})).
// The two-sided rate is found by a golden-section scan with the prefactor
// eliminated analytically at each candidate rate.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mfg {

struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ExpModel { OneSided, TwoSided };

struct ExpFit {
  double M = 0.0;
  double rate = 0.0;
  double residual = 0.0;  // RMS of log-space residuals
  int points_used = 0;
};

namespace detail {

struct Filtered {
  std::vector<double> t, z;  // times and log-values above the floor
};

inline Filtered filter_profile(const std::vector<double>& times,
                               const std::vector<double>& values, double floor) {
  if (times.size() != values.size()) throw FitError("fit_exponential: size mismatch");
  Filtered f;
  for (size_t i = 0; i < times.size(); ++i)
    if (values[i] > floor) {
      f.t.push_back(times[i]);
      f.z.push_back(std::log(values[i]));
    }
  return f;
}

inline ExpFit linear_fit(const std::vector<double>& t, const std::vector<double>& z) {
  const size_t n = t.size();
  double mt = 0, mz = 0;
  for (size_t i = 0; i < n; ++i) {
    mt += t[i];
    mz += z[i];
  }
  mt /= n;
  mz /= n;
  double sxx = 0, sxz = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (t[i] - mt) * (t[i] - mt);
    sxz += (t[i] - mt) * (z[i] - mz);
  }
  if (sxx == 0) throw FitError("fit_exponential: degenerate time axis");
  double slope = sxz / sxx;
  ExpFit fit;
  fit.rate = -slope;
  fit.M = std::exp(mz + fit.rate * mt);
  double sse = 0;
  for (size_t i = 0; i < n; ++i) {
    double r = z[i] - (mz + slope * (t[i] - mt));
    sse += r * r;
  }
  fit.residual = std::sqrt(sse / n);
  fit.points_used = (int)n;
  return fit;
}

// SSE in log space for the symmetric model at rate w, with log M eliminated
inline double two_sided_sse(const std::vector<double>& t, const std::vector<double>& z,
                            double T, double w, double* logM_out = nullptr) {
  const size_t n = t.size();
  double mean = 0;
  std::vector<double> shape(n);
  for (size_t i = 0; i < n; ++i) {
    shape[i] = std::log(std::exp(-w * t[i]) + std::exp(-w * (T - t[i])));
    mean += z[i] - shape[i];
  }
  mean /= n;
  if (logM_out) *logM_out = mean;
  double sse = 0;
  for (size_t i = 0; i < n; ++i) {
    double r = z[i] - shape[i] - mean;
    sse += r * r;
  }
  return sse;
}

}  // namespace detail

// For the two-sided model the profile horizon T is taken from the last time
// sample unless given explicitly.
inline ExpFit fit_exponential(const std::vector<double>& times,
                              const std::vector<double>& values, ExpModel model,
                              double T = 0.0, double floor = 1e-13) {
  auto f = detail::filter_profile(times, values, floor);
  if (f.t.size() < 8) throw FitError("fit_exponential: fewer than 8 points above floor");
  if (model == ExpModel::OneSided) return detail::linear_fit(f.t, f.z);

  if (T <= 0) T = times.back();
  // seed from a one-sided fit on the first half of the window
  std::vector<double> th, zh;
  for (size_t i = 0; i < f.t.size(); ++i)
    if (f.t[i] <= 0.5 * T) {
      th.push_back(f.t[i]);
      zh.push_back(f.z[i]);
    }
  double w0 = 1.0;
  if (th.size() >= 3) {
    try {
      double r = detail::linear_fit(th, zh).rate;
      if (r > 0 && std::isfinite(r)) w0 = r;
    } catch (const FitError&) {
    }
  }
  double lo = w0 / 16.0, hi = w0 * 16.0;
  // golden-section minimization of the log-space SSE
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = detail::two_sided_sse(f.t, f.z, T, x1);
  double f2 = detail::two_sided_sse(f.t, f.z, T, x2);
  for (int it = 0; it < 200; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = detail::two_sided_sse(f.t, f.z, T, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = detail::two_sided_sse(f.t, f.z, T, x2);
    }
    if (b - a < 1e-13 * std::max(1.0, b)) break;
  }
  double w = 0.5 * (a + b), logM;
  double sse = detail::two_sided_sse(f.t, f.z, T, w, &logM);
  ExpFit fit;
  fit.rate = w;
  fit.M = std::exp(logM);
  fit.residual = std::sqrt(sse / f.t.size());
  fit.points_used = (int)f.t.size();
  return fit;
}

}  // namespace mfg
