#pragma once

#include "mvx/common.hpp"

namespace mvx::cli {

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_half = 0.0;  // 95% confidence half-width for the slope
  int used = 0;          // points that entered the fit
  bool ok = false;       // true when at least three points were usable
};

/// Two-sided 97.5% Student t quantile for the given degrees of freedom.
inline double t_quantile_975(int df) {
  static const double table[] = {
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
      2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
      2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (df < 1) return std::numeric_limits<double>::infinity();
  if (df <= 30) return table[df - 1];
  return 1.96;
}

/// Least-squares line through (t, log y) over the window [tmin, tmax].
/// Points with y <= 0 are skipped, as are points sitting below floor_mult
/// times their standard error (noise floor, where log-linearity is gone).
inline SlopeFit fit_log_slope(const std::vector<double>& t,
                              const std::vector<double>& y,
                              const std::vector<double>& se, double tmin,
                              double tmax, double floor_mult = 10.0) {
  if (t.size() != y.size() || (!se.empty() && se.size() != y.size()))
    throw SimError("slope fit needs matching t / y / se lengths");
  std::vector<double> ts, ls;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < tmin || t[k] > tmax) continue;
    if (!(y[k] > 0.0)) continue;
    if (!se.empty() && y[k] < floor_mult * se[k]) continue;
    ts.push_back(t[k]);
    ls.push_back(std::log(y[k]));
  }
  SlopeFit fit;
  fit.used = static_cast<int>(ts.size());
  if (fit.used < 3) return fit;

  const double n = static_cast<double>(fit.used);
  double mt = 0.0, ml = 0.0;
  for (int k = 0; k < fit.used; ++k) {
    mt += ts[static_cast<std::size_t>(k)];
    ml += ls[static_cast<std::size_t>(k)];
  }
  mt /= n;
  ml /= n;
  double sxx = 0.0, sxy = 0.0;
  for (int k = 0; k < fit.used; ++k) {
    const double dt = ts[static_cast<std::size_t>(k)] - mt;
    sxx += dt * dt;
    sxy += dt * (ls[static_cast<std::size_t>(k)] - ml);
  }
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = ml - fit.slope * mt;
  double ssr = 0.0;
  for (int k = 0; k < fit.used; ++k) {
    const double r = ls[static_cast<std::size_t>(k)] - fit.intercept -
                     fit.slope * ts[static_cast<std::size_t>(k)];
    ssr += r * r;
  }
  const double sigma2 = ssr / (n - 2.0);
  fit.ci_half = t_quantile_975(fit.used - 2) * std::sqrt(sigma2 / sxx);
  fit.ok = true;
  return fit;
}

}  // namespace mvx::cli
