#pragma once

#include "mvx/common.hpp"
#include "mvx/rng.hpp"

#include <limits>
#include <utility>

namespace mvx::model {

// Model description for a mean-field SDE whose coefficients may depend on the
// current law of the state and on a finite regime. The law enters only through
// a declared list of scalar functionals; the particle system evaluates those
// once per step over the whole cloud and hands the frozen values to the
// coefficient callbacks.
//
// Regimes are indexed 0..m-1 throughout the code; files, reports and configs
// use the labels 1..m.

/// One declared functional x -> f(x) of the state. The statistic passed to the
/// coefficients is the empirical expectation of f over the cloud.
struct MeasureFunctional {
  std::string name;
  std::function<double(const Vec&)> f;
};

/// Frozen empirical expectations of the declared functionals, in declaration
/// order. Coefficients read them by index; name lookup is for tests and
/// reporting.
class MeasureStats {
 public:
  MeasureStats() = default;
  MeasureStats(std::vector<std::string> names, Vec values)
      : names_(std::move(names)), values_(std::move(values)) {
    if (static_cast<std::int64_t>(names_.size()) != values_.size())
      throw SimError("MeasureStats: name/value length mismatch");
  }

  double operator[](int idx) const { return values_[idx]; }
  int size() const { return static_cast<int>(values_.size()); }
  const Vec& values() const { return values_; }
  const std::vector<std::string>& names() const { return names_; }

  double get(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return values_[static_cast<std::int64_t>(i)];
    throw SimError("MeasureStats: unknown functional '" + name + "'");
  }

 private:
  std::vector<std::string> names_;
  Vec values_;
};

/// Empirical expectations of `fs` over the columns of `positions` (d x N).
inline MeasureStats compute_stats(const std::vector<MeasureFunctional>& fs,
                                  const Mat& positions) {
  const std::int64_t n = positions.cols();
  if (n == 0) throw SimError("compute_stats: empty cloud");
  Vec vals = Vec::Zero(static_cast<std::int64_t>(fs.size()));
  std::vector<std::string> names;
  names.reserve(fs.size());
  for (std::size_t k = 0; k < fs.size(); ++k) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < n; ++j) acc += fs[k].f(positions.col(j));
    vals[static_cast<std::int64_t>(k)] = acc / static_cast<double>(n);
    names.push_back(fs[k].name);
  }
  return MeasureStats(std::move(names), std::move(vals));
}

/// Stats of the image measure under x -> truncate(x, radius), without
/// materializing the projected cloud.
inline MeasureStats compute_stats_truncated(
    const std::vector<MeasureFunctional>& fs, const Mat& positions,
    double radius) {
  const std::int64_t n = positions.cols();
  if (n == 0) throw SimError("compute_stats: empty cloud");
  Vec vals = Vec::Zero(static_cast<std::int64_t>(fs.size()));
  std::vector<std::string> names;
  names.reserve(fs.size());
  for (std::size_t k = 0; k < fs.size(); ++k) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < n; ++j)
      acc += fs[k].f(truncate(positions.col(j), radius));
    vals[static_cast<std::int64_t>(k)] = acc / static_cast<double>(n);
    names.push_back(fs[k].name);
  }
  return MeasureStats(std::move(names), std::move(vals));
}

/// Throwing check of the generator-matrix property at tolerance `tol`:
/// off-diagonal entries nonnegative, every row summing to zero, all entries
/// within `bound` in absolute value.
inline void check_q_property(const Mat& Q, double bound, double tol = 1e-12) {
  const int m = static_cast<int>(Q.rows());
  if (Q.cols() != m) throw SimError("rate matrix must be square");
  for (int i = 0; i < m; ++i) {
    double row = 0.0;
    for (int j = 0; j < m; ++j) {
      const double v = Q(i, j);
      if (!std::isfinite(v))
        throw SimError("rate matrix entry (" + std::to_string(i + 1) + "," +
                       std::to_string(j + 1) + ") is not finite");
      if (i != j && v < -tol)
        throw SimError("negative off-diagonal rate at (" +
                       std::to_string(i + 1) + "," + std::to_string(j + 1) +
                       "): " + fmt6(v));
      if (std::abs(v) > bound + tol)
        throw SimError("rate entry (" + std::to_string(i + 1) + "," +
                       std::to_string(j + 1) + ") = " + fmt6(v) +
                       " exceeds declared bound " + fmt6(bound));
      row += v;
    }
    if (std::abs(row) > tol)
      throw SimError("row " + std::to_string(i + 1) +
                     " of rate matrix sums to " + fmt6(row));
  }
}

/// State-dependent transition-rate matrix q_ij(x) with a uniform bound on
/// entry magnitudes. `bound` must dominate |q_ij(x)| for all x; the switching
/// samplers size their dominating clocks from it.
struct RateMatrix {
  int m = 0;
  std::function<Mat(const Vec&)> evaluate;
  double bound = 0.0;
  bool x_dependent = true;

  static RateMatrix constant(const Mat& Q) {
    RateMatrix r;
    r.m = static_cast<int>(Q.rows());
    r.bound = Q.size() ? Q.cwiseAbs().maxCoeff() : 0.0;
    r.x_dependent = false;
    check_q_property(Q, r.bound);
    r.evaluate = [Q](const Vec&) { return Q; };
    return r;
  }
};

/// Outcome of a probe-based audit: clause violations collected as text, one
/// line per finding, rather than thrown.
struct ValidationReport {
  bool passed = true;
  double max_entry = 0.0;
  std::vector<std::string> violations;

  std::string text() const {
    std::string s = passed ? "pass" : "FAIL";
    s += " (max entry magnitude " + fmt6(max_entry) + ")";
    for (const auto& v : violations) s += "\n  " + v;
    return s;
  }
};

/// Audits the generator property of `rates` at each probe point: off-diagonal
/// signs, zero row sums (within tol), the declared entry bound, and entry
/// finiteness. Non-finite entries are reported, not thrown.
inline ValidationReport validate_q_property(const RateMatrix& rates,
                                            const std::vector<Vec>& probes,
                                            double tol = 1e-12) {
  if (probes.empty())
    throw SimError("validate_q_property: need at least one probe point");
  ValidationReport rep;
  for (const Vec& x : probes) {
    const Mat Q = rates.evaluate(x);
    const std::string at = " at x = " + fmt_vec(x);
    if (static_cast<int>(Q.rows()) != rates.m ||
        static_cast<int>(Q.cols()) != rates.m) {
      rep.passed = false;
      rep.violations.push_back("matrix is " + std::to_string(Q.rows()) + "x" +
                               std::to_string(Q.cols()) + ", expected " +
                               std::to_string(rates.m) + "x" +
                               std::to_string(rates.m) + at);
      continue;
    }
    for (int i = 0; i < rates.m; ++i) {
      double row = 0.0;
      bool row_finite = true;
      for (int j = 0; j < rates.m; ++j) {
        const double v = Q(i, j);
        const std::string entry = "entry (" + std::to_string(i + 1) + "," +
                                  std::to_string(j + 1) + ")";
        if (!std::isfinite(v)) {
          rep.passed = false;
          row_finite = false;
          rep.violations.push_back(entry + " is not finite" + at);
          continue;
        }
        rep.max_entry = std::max(rep.max_entry, std::abs(v));
        if (i != j && v < -tol) {
          rep.passed = false;
          rep.violations.push_back(entry + " = " + fmt6(v) +
                                   " is a negative off-diagonal rate" + at);
        }
        if (std::abs(v) > rates.bound + tol) {
          rep.passed = false;
          rep.violations.push_back(entry + " = " + fmt6(v) +
                                   " exceeds the declared bound " +
                                   fmt6(rates.bound) + at);
        }
        row += v;
      }
      if (row_finite && std::abs(row) > tol) {
        rep.passed = false;
        rep.violations.push_back("row " + std::to_string(i + 1) + " sums to " +
                                 fmt6(row) + at);
      }
    }
  }
  return rep;
}

using DriftFn =
    std::function<Vec(double t, const Vec& x, const MeasureStats&, int regime)>;
using DiffusionFn =
    std::function<Mat(double t, const Vec& x, const MeasureStats&, int regime)>;

/// Initial condition: a position sampler and a regime sampler, both driven by
/// externally supplied streams so ensembles stay reproducible.
struct InitSampler {
  std::function<Vec(RngStream&)> position;
  std::function<int(RngStream&)> regime;
};

/// Deterministic start at (x0, r0).
inline InitSampler init_point(const Vec& x0, int r0) {
  return {[x0](RngStream&) { return x0; }, [r0](RngStream&) { return r0; }};
}

inline InitSampler init_point1d(double x0, int r0) {
  Vec v(1);
  v[0] = x0;
  return init_point(v, r0);
}

/// Componentwise uniform start on [lo, hi], fixed regime r0.
inline InitSampler init_uniform(const Vec& lo, const Vec& hi, int r0) {
  return {[lo, hi](RngStream& g) {
            Vec x(lo.size());
            for (std::int64_t k = 0; k < lo.size(); ++k)
              x[k] = lo[k] + (hi[k] - lo[k]) * g.uniform();
            return x;
          },
          [r0](RngStream&) { return r0; }};
}

inline InitSampler init_uniform1d(double lo, double hi, int r0) {
  Vec l(1), h(1);
  l[0] = lo;
  h[0] = hi;
  return init_uniform(l, h, r0);
}

/// Componentwise Gaussian start, fixed regime r0.
inline InitSampler init_gaussian(const Vec& mean, const Vec& stddev, int r0) {
  return {[mean, stddev](RngStream& g) {
            Vec x(mean.size());
            for (std::int64_t k = 0; k < mean.size(); ++k)
              x[k] = mean[k] + stddev[k] * g.normal();
            return x;
          },
          [r0](RngStream&) { return r0; }};
}

/// Full model: dimensions, declared law functionals, coefficients, and the
/// regime transition rates. `brownian_dim` is the number of driving Brownian
/// components; diffusion must return a dim x brownian_dim matrix.
struct ModelSpec {
  std::string name;
  int dim = 1;
  int brownian_dim = 1;
  int regimes = 1;
  std::vector<MeasureFunctional> functionals;
  DriftFn drift;
  DiffusionFn diffusion;
  RateMatrix q;

  void validate() const {
    if (dim < 1 || brownian_dim < 1 || regimes < 1)
      throw SimError("model dimensions must be positive");
    if (!drift || !diffusion) throw SimError("model is missing coefficients");
    if (q.m != regimes)
      throw SimError("rate matrix regime count " + std::to_string(q.m) +
                     " disagrees with model regime count " +
                     std::to_string(regimes));
    if (q.bound < 0.0 || !std::isfinite(q.bound))
      throw SimError("rate bound must be finite and nonnegative");
  }

  int functional_index(const std::string& fname) const {
    for (std::size_t i = 0; i < functionals.size(); ++i)
      if (functionals[i].name == fname) return static_cast<int>(i);
    throw SimError("model declares no functional named '" + fname + "'");
  }
};

/// Evaluates both coefficients and verifies the outputs are finite with the
/// declared dimensions. Errors carry (t, x, regime) for diagnosis.
inline std::pair<Vec, Mat> evaluate_drift_diffusion(const ModelSpec& spec,
                                                    double t, const Vec& x,
                                                    const MeasureStats& stats,
                                                    int i) {
  if (i < 0 || i >= spec.regimes)
    throw SimError("regime index " + std::to_string(i + 1) +
                   " outside 1.." + std::to_string(spec.regimes));
  Vec b = spec.drift(t, x, stats, i);
  Mat s = spec.diffusion(t, x, stats, i);
  const std::string where = " at t = " + fmt6(t) + ", x = " + fmt_vec(x) +
                            ", regime " + std::to_string(i + 1);
  if (b.size() != spec.dim)
    throw SimError("drift returned dimension " + std::to_string(b.size()) +
                   where);
  if (s.rows() != spec.dim || s.cols() != spec.brownian_dim)
    throw SimError("diffusion returned shape " + std::to_string(s.rows()) +
                   "x" + std::to_string(s.cols()) + where);
  if (!b.allFinite()) throw SimError("drift is not finite" + where);
  if (!s.allFinite()) throw SimError("diffusion is not finite" + where);
  return {std::move(b), std::move(s)};
}

/// Finite-difference step h = 1e-5 * (1 + |x|): scale-aware, fixed scheme.
inline double fd_step(const Vec& x) { return 1e-5 * (1.0 + x.norm()); }

inline Vec fd_gradient(const std::function<double(const Vec&)>& f,
                       const Vec& x) {
  const double h = fd_step(x);
  Vec g(x.size());
  Vec e = x;
  for (std::int64_t k = 0; k < x.size(); ++k) {
    e[k] = x[k] + h;
    const double fp = f(e);
    e[k] = x[k] - h;
    const double fm = f(e);
    e[k] = x[k];
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline Mat fd_hessian(const std::function<double(const Vec&)>& f,
                      const Vec& x) {
  const double h = fd_step(x);
  const std::int64_t d = x.size();
  Mat H(d, d);
  const double f0 = f(x);
  Vec e = x;
  for (std::int64_t k = 0; k < d; ++k) {
    e[k] = x[k] + h;
    const double fp = f(e);
    e[k] = x[k] - h;
    const double fm = f(e);
    e[k] = x[k];
    H(k, k) = (fp - 2.0 * f0 + fm) / (h * h);
  }
  for (std::int64_t k = 0; k < d; ++k)
    for (std::int64_t l = k + 1; l < d; ++l) {
      e[k] = x[k] + h;
      e[l] = x[l] + h;
      const double fpp = f(e);
      e[l] = x[l] - h;
      const double fpm = f(e);
      e[k] = x[k] - h;
      const double fmm = f(e);
      e[l] = x[l] + h;
      const double fmp = f(e);
      e[k] = x[k];
      e[l] = x[l];
      H(k, l) = H(l, k) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  return H;
}

/// Scalar function with optional analytic derivatives; grad/hess fall back to
/// central finite differences when the callbacks are absent.
struct ScalarField {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;

  double operator()(const Vec& x) const { return value(x); }
  Vec grad(const Vec& x) const {
    return gradient ? gradient(x) : fd_gradient(value, x);
  }
  Mat hess(const Vec& x) const {
    return hessian ? hessian(x) : fd_hessian(value, x);
  }
  bool analytic() const {
    return static_cast<bool>(gradient) && static_cast<bool>(hessian);
  }
};

/// Lyapunov data for a model: per-regime V(x, i) with derivatives, the
/// comparison function phi <= V, the coupled costs Vtilde / Vhat evaluated on
/// differences x - y, and the rate constants.
///
///   lambda1, lambda2: drift condition  LV <= lambda1 V + lambda2 mu(phi)
///   gamma:            integral contraction rate for Vtilde
///   theta:            per-regime contraction rate for Vhat
///   K_hat:            Vhat(x - y) <= K_hat * max(Vhat(x), Vhat(y))
struct LyapunovSpec {
  std::vector<ScalarField> V;
  std::function<double(const Vec&)> phi;
  ScalarField Vtilde;
  ScalarField Vhat;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double gamma = 0.0;
  double theta = 0.0;
  double K_hat = 2.0;

  const ScalarField& v(int i) const {
    if (i < 0 || i >= static_cast<int>(V.size()))
      throw SimError("Lyapunov V has no regime " + std::to_string(i + 1));
    return V[static_cast<std::size_t>(i)];
  }

  /// Smallest V(x, i) over regimes.
  double v_min(const Vec& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : V) best = std::min(best, f.value(x));
    return best;
  }
};

}  // namespace mvx::model
