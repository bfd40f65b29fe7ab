#include "mvx/lyapunov.hpp"

#include <algorithm>
#include <tuple>

namespace mvx::lyapunov {

namespace {

double drift_tol(bool analytic, double lv) {
  return analytic ? 1e-9 : 1e-6 * (1.0 + std::abs(lv));
}

model::MeasureStats weighted_stats(const model::ModelSpec& spec,
                                   const measures::EmpiricalMeasure& mu) {
  mu.validate();
  std::vector<std::string> names;
  Vec vals = Vec::Zero(static_cast<std::int64_t>(spec.functionals.size()));
  std::int64_t fi = 0;
  for (const auto& f : spec.functionals) {
    names.push_back(f.name);
    double acc = 0.0;
    for (std::int64_t k = 0; k < mu.size(); ++k)
      acc += mu.weight(k) * f.f(mu.atoms.col(k));
    vals[fi++] = acc;
  }
  return model::MeasureStats(std::move(names), std::move(vals));
}

double measure_phi(const model::LyapunovSpec& lyap,
                   const measures::EmpiricalMeasure& mu) {
  double acc = 0.0;
  for (std::int64_t k = 0; k < mu.size(); ++k)
    acc += mu.weight(k) * lyap.phi(mu.atoms.col(k));
  return acc;
}

/// Worst-excess tracker: a probe fails when margin > its own tolerance, and
/// the report carries the probe with the largest excess.
struct Worst {
  bool any = false;
  double excess = -std::numeric_limits<double>::infinity();
  double margin = 0.0, tol = 0.0;
  Vec x;
  int regime = -1, measure = -1;

  void offer(double m, double tl, const Vec& at, int reg, int meas) {
    any = true;
    if (m - tl > excess) {
      excess = m - tl;
      margin = m;
      tol = tl;
      x = at;
      regime = reg;
      measure = meas;
    }
  }
  bool ok() const { return any && excess <= 0.0; }
  void fill(DriftReport& r) const {
    r.worst_margin = margin;
    r.tol = tol;
    r.worst_x = x;
    r.worst_regime = regime;
    r.worst_measure = measure;
  }
};

double coupled_field_value(const model::ModelSpec& spec,
                           const model::ScalarField& f, double t, const Vec& x,
                           const Vec& y, const model::MeasureStats& stats_mu,
                           const model::MeasureStats& stats_nu, int i) {
  auto [bx, sx] = model::evaluate_drift_diffusion(spec, t, x, stats_mu, i);
  auto [by, sy] = model::evaluate_drift_diffusion(spec, t, y, stats_nu, i);
  const Vec z = x - y;
  const Vec db = bx - by;
  const Mat ds = sx - sy;
  const double first = db.dot(f.grad(z));
  if (!std::isfinite(first))
    throw SimError("coupled generator drift part non-finite at x - y = " +
                   fmt_vec(z) + ", regime " + std::to_string(i + 1));
  const Mat a = ds * ds.transpose();
  const double second = 0.5 * (a.array() * f.hess(z).array()).sum();
  if (!std::isfinite(second))
    throw SimError("coupled generator diffusion part non-finite at x - y = " +
                   fmt_vec(z) + ", regime " + std::to_string(i + 1));
  return first + second;
}

}  // namespace

std::string DriftReport::csv_header() {
  return "check,passed,worst_margin,tol,regime,measure,integral,pointwise,"
         "probe";
}

std::string DriftReport::csv_row() const {
  std::string probe;
  for (std::int64_t k = 0; k < worst_x.size(); ++k) {
    if (k) probe += ' ';
    probe += fmt17(worst_x[k]);
  }
  std::string s = description;
  s += ',';
  s += passed ? '1' : '0';
  s += ',' + fmt17(worst_margin) + ',' + fmt17(tol);
  s += ',' + std::to_string(worst_regime >= 0 ? worst_regime + 1 : 0);
  s += ',' + std::to_string(worst_measure >= 0 ? worst_measure + 1 : 0);
  s += ',' + std::to_string(integral_passed);
  s += ',' + std::to_string(pointwise_passed);
  s += ',' + probe;
  return s;
}

std::string DriftReport::text() const {
  std::string s = passed ? "[PASS] " : "[FAIL] ";
  s += description;
  s += "\n  worst margin " + fmt6(worst_margin) + " (tol " + fmt6(tol) + ")";
  if (worst_regime >= 0) s += " at regime " + std::to_string(worst_regime + 1);
  if (worst_measure >= 0)
    s += ", measure " + std::to_string(worst_measure + 1);
  if (worst_x.size() > 0) s += ", x = " + fmt_vec(worst_x);
  s += '\n';
  if (integral_passed >= 0)
    s += std::string("  integral form: ") +
         (integral_passed ? "pass" : "fail") + '\n';
  if (pointwise_passed >= 0)
    s += std::string("  pointwise form: ") +
         (pointwise_passed ? "pass" : "fail") + '\n';
  for (const auto& n : notes) s += "  note: " + n + '\n';
  return s;
}

double apply_generator(const model::ModelSpec& spec,
                       const model::LyapunovSpec& lyap, double t, const Vec& x,
                       const model::MeasureStats& stats, int i) {
  auto [b, sg] = model::evaluate_drift_diffusion(spec, t, x, stats, i);
  const model::ScalarField& vi = lyap.v(i);

  const double drift = b.dot(vi.grad(x));
  if (!std::isfinite(drift))
    throw SimError("generator drift part non-finite at x = " + fmt_vec(x) +
                   ", regime " + std::to_string(i + 1));

  const Mat a = sg * sg.transpose();
  const double diff = 0.5 * (a.array() * vi.hess(x).array()).sum();
  if (!std::isfinite(diff))
    throw SimError("generator diffusion part non-finite at x = " + fmt_vec(x) +
                   ", regime " + std::to_string(i + 1));

  const Mat q = spec.q.evaluate(x);
  const double vix = vi.value(x);
  double sw = 0.0;
  for (int j = 0; j < spec.regimes; ++j)
    if (j != i) sw += q(i, j) * (lyap.v(j).value(x) - vix);
  if (!std::isfinite(sw))
    throw SimError("generator switch part non-finite at x = " + fmt_vec(x) +
                   ", regime " + std::to_string(i + 1));

  return drift + diff + sw;
}

double apply_coupled_generator(const model::ModelSpec& spec,
                               const model::LyapunovSpec& lyap, double t,
                               const Vec& x, const Vec& y,
                               const model::MeasureStats& stats_mu,
                               const model::MeasureStats& stats_nu, int i) {
  if (!lyap.Vtilde.value)
    throw SimError("coupled generator needs the Vtilde cost");
  return coupled_field_value(spec, lyap.Vtilde, t, x, y, stats_mu, stats_nu,
                             i);
}

DriftReport check_drift_H2(const model::ModelSpec& spec,
                           const model::LyapunovSpec& lyap,
                           const std::vector<Vec>& positions,
                           const std::vector<measures::EmpiricalMeasure>& mus,
                           double t) {
  if (positions.empty()) throw SimError("drift audit needs probe positions");
  if (mus.empty()) throw SimError("drift audit needs probe measures");
  if (static_cast<int>(lyap.V.size()) != spec.regimes)
    throw SimError("Lyapunov spec covers " + std::to_string(lyap.V.size()) +
                   " regimes, model has " + std::to_string(spec.regimes));

  DriftReport r;
  r.description = "drift condition audit: " +
                  std::to_string(positions.size()) + " positions x " +
                  std::to_string(spec.regimes) + " regimes x " +
                  std::to_string(mus.size()) + " measures";
  Worst worst;
  for (std::size_t mi = 0; mi < mus.size(); ++mi) {
    const model::MeasureStats stats = weighted_stats(spec, mus[mi]);
    const double mphi = measure_phi(lyap, mus[mi]);
    for (const Vec& x : positions) {
      for (int i = 0; i < spec.regimes; ++i) {
        const double lv = apply_generator(spec, lyap, t, x, stats, i);
        const double margin =
            lv - lyap.lambda1 * lyap.v(i).value(x) - lyap.lambda2 * mphi;
        worst.offer(margin, drift_tol(lyap.v(i).analytic(), lv), x, i,
                    static_cast<int>(mi));
      }
    }
  }
  worst.fill(r);
  bool ok = worst.ok();

  // phi must lie below every V(., i).
  bool phi_ok = true;
  for (const Vec& x : positions) {
    const double p = lyap.phi(x);
    for (int i = 0; i < spec.regimes; ++i)
      if (p > lyap.v(i).value(x) + 1e-12) {
        phi_ok = false;
        r.notes.push_back("phi > V at x = " + fmt_vec(x) + ", regime " +
                          std::to_string(i + 1));
        break;
      }
    if (!phi_ok) break;
  }
  if (phi_ok) r.notes.push_back("phi <= V at all probes");
  ok = ok && phi_ok;

  // Coercivity on the probe radii: minima of min_i V over radius shells must
  // not decrease as the shell radius grows.
  {
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    for (const Vec& x : positions) {
      const double rad = x.norm();
      rmin = std::min(rmin, rad);
      rmax = std::max(rmax, rad);
    }
    const int nshell = 8;
    std::vector<double> shell_min(
        nshell, std::numeric_limits<double>::infinity());
    if (rmax > rmin) {
      for (const Vec& x : positions) {
        int s = static_cast<int>((x.norm() - rmin) / (rmax - rmin) * nshell);
        s = std::clamp(s, 0, nshell - 1);
        shell_min[static_cast<std::size_t>(s)] =
            std::min(shell_min[static_cast<std::size_t>(s)], lyap.v_min(x));
      }
    }
    bool coercive = true;
    double prev = -std::numeric_limits<double>::infinity();
    int used = 0;
    for (double m : shell_min) {
      if (!std::isfinite(m)) continue;
      ++used;
      if (m < prev - 1e-12) coercive = false;
      prev = m;
    }
    if (used < 2) {
      r.notes.push_back(
          "coercivity: probe radii span too few shells to audit");
    } else if (coercive) {
      r.notes.push_back("coercivity: shell minima of V nondecreasing over " +
                        std::to_string(used) + " radius shells");
    } else {
      r.notes.push_back("coercivity: shell minima of V decrease with radius");
      ok = false;
    }
  }

  r.passed = ok;
  return r;
}

DriftReport check_contraction(const model::ModelSpec& spec,
                              const model::LyapunovSpec& lyap,
                              const std::vector<PairedCloud>& couplings,
                              const ContractionOptions& opts) {
  if (couplings.empty()) throw SimError("contraction audit needs couplings");
  const model::ScalarField& field = opts.use_theta ? lyap.Vhat : lyap.Vtilde;
  if (!field.value)
    throw SimError("contraction audit needs the coupled cost callback");
  const double rate = opts.rate_override
                          ? *opts.rate_override
                          : (opts.use_theta ? lyap.theta : lyap.gamma);

  DriftReport r;
  r.description = std::string(opts.use_theta
                                  ? "per-regime contraction audit, rate "
                                  : "contraction audit, rate ") +
                  fmt6(rate) + " over " + std::to_string(couplings.size()) +
                  " couplings";
  Worst integral, pointwise;
  for (std::size_t ci = 0; ci < couplings.size(); ++ci) {
    const PairedCloud& c = couplings[ci];
    const std::int64_t K = c.x.cols();
    if (K == 0 || c.y.cols() != K || c.x.rows() != c.y.rows())
      throw SimError("coupling " + std::to_string(ci + 1) +
                     " has mismatched paired atoms");
    if (static_cast<std::int64_t>(c.regimes.size()) != K)
      throw SimError("coupling " + std::to_string(ci + 1) +
                     " needs one regime per pair");

    const model::MeasureStats stats_mu =
        weighted_stats(spec, measures::EmpiricalMeasure::from_points(c.x));
    const model::MeasureStats stats_nu =
        weighted_stats(spec, measures::EmpiricalMeasure::from_points(c.y));
    double allowance = 0.0;
    if (opts.gamma2 != 0.0) {
      if (!lyap.Vtilde.value)
        throw SimError("the gamma2 allowance needs the Vtilde cost");
      const auto wv = measures::ot_cost(
          measures::EmpiricalMeasure::from_points(c.x),
          measures::EmpiricalMeasure::from_points(c.y),
          measures::GroundCost::lyapunov(lyap.Vtilde.value));
      allowance = opts.gamma2 * wv.value;
    }

    double sum_gen = 0.0, sum_f = 0.0;
    for (std::int64_t k = 0; k < K; ++k) {
      const Vec xk = c.x.col(k);
      const Vec yk = c.y.col(k);
      const int i = c.regimes[static_cast<std::size_t>(k)];
      const double g =
          coupled_field_value(spec, field, 0.0, xk, yk, stats_mu, stats_nu, i);
      const double fv = field.value(xk - yk);
      sum_gen += g;
      sum_f += fv;
      const double pm = g + rate * fv - allowance;
      pointwise.offer(pm, drift_tol(field.analytic(), g), Vec(xk - yk), i,
                      static_cast<int>(ci));
    }
    const double mean_gen = sum_gen / static_cast<double>(K);
    const double mean_f = sum_f / static_cast<double>(K);
    const double im = mean_gen + rate * mean_f - allowance;
    integral.offer(im, drift_tol(field.analytic(), mean_gen), Vec(), -1,
                   static_cast<int>(ci));
  }

  r.integral_passed = integral.ok() ? 1 : 0;
  r.pointwise_passed = pointwise.ok() ? 1 : 0;
  r.passed = integral.ok();
  integral.fill(r);
  if (!integral.ok()) {
    // Locate the failure by its worst pointwise probe.
    r.worst_x = pointwise.x;
    r.worst_regime = pointwise.regime;
  }
  r.notes.push_back("pointwise worst margin " + fmt6(pointwise.margin) +
                    " at x - y = " + fmt_vec(pointwise.x) + ", regime " +
                    std::to_string(pointwise.regime + 1) + ", coupling " +
                    std::to_string(pointwise.measure + 1));
  return r;
}

std::string BoundReport::text() const {
  std::string s = passed ? "[PASS] " : "[FAIL] ";
  s += "moment bound: worst relative margin " + fmt6(worst_margin) +
       " at t = " + fmt6(worst_t) + '\n';
  return s;
}

BoundReport moment_bound_check(const particle::TimeSeries& series,
                               const model::LyapunovSpec& lyap, double delta) {
  if (!series.has_col("EV"))
    throw SimError("moment bound check needs an EV column");
  if (series.rows.empty()) throw SimError("moment bound check: empty series");
  const int tcol = series.col("t");
  const int vcol = series.col("EV");
  const double rate = lyap.lambda1 + lyap.lambda2;
  const double t0 = series.rows.front()[tcol];
  const double ev0 = series.rows.front()[vcol];

  BoundReport br;
  br.passed = true;
  br.worst_margin = -std::numeric_limits<double>::infinity();
  for (const Vec& row : series.rows) {
    const double t = row[tcol];
    const double ev = row[vcol];
    const double bound = std::exp(rate * (t - t0)) * ev0 * (1.0 + delta);
    double margin;
    if (bound > 0.0)
      margin = ev / bound - 1.0;
    else
      margin = ev > 1e-300 ? std::numeric_limits<double>::infinity() : 0.0;
    if (margin > br.worst_margin) {
      br.worst_margin = margin;
      br.worst_t = t;
    }
  }
  br.passed = br.worst_margin <= 1e-12;
  return br;
}

DriftReport check_coupled_structure(const model::LyapunovSpec& lyap,
                                    const std::vector<Vec>& probes) {
  if (probes.empty()) throw SimError("structure audit needs probes");
  DriftReport r;
  r.description = "coupled cost structure audit: " +
                  std::to_string(probes.size()) + " probes";
  bool ok = true;

  const Vec zero = Vec::Zero(probes.front().size());
  if (lyap.Vtilde.value) {
    const double vz = lyap.Vtilde.value(zero);
    if (std::abs(vz) > 1e-12) {
      ok = false;
      r.notes.push_back("Vtilde(0) = " + fmt6(vz) + ", expected 0");
    }
  }
  if (lyap.Vhat.value) {
    const double vz = lyap.Vhat.value(zero);
    if (std::abs(vz) > 1e-12) {
      ok = false;
      r.notes.push_back("Vhat(0) = " + fmt6(vz) + ", expected 0");
    }
  }

  for (const Vec& x : probes)
    for (std::size_t i = 0; i < lyap.V.size(); ++i)
      if (lyap.V[i].value(x) < -1e-12) {
        ok = false;
        r.notes.push_back("V < 0 at x = " + fmt_vec(x) + ", regime " +
                          std::to_string(i + 1));
      }

  double kemp = 0.0;
  if (lyap.Vhat.value) {
    for (const Vec& x : probes)
      for (const Vec& y : probes) {
        const double denom =
            std::max(lyap.Vhat.value(x), lyap.Vhat.value(y));
        if (denom < 1e-300) continue;
        kemp = std::max(kemp, lyap.Vhat.value(x - y) / denom);
      }
    r.notes.push_back("empirical K = " + fmt6(kemp) + " (declared K_hat " +
                      fmt6(lyap.K_hat) + ")");
    if (kemp > lyap.K_hat + 1e-9) ok = false;
  }

  r.worst_margin = kemp - lyap.K_hat;
  r.tol = 1e-9;
  r.passed = ok;
  return r;
}

}  // namespace mvx::lyapunov
