#pragma once

#include "mvx/measures.hpp"
#include "mvx/model.hpp"
#include "mvx/timeseries.hpp"

#include <optional>

namespace mvx::lyapunov {

// Numerical audits of the drift and contraction hypotheses: generators
// applied to candidate Lyapunov functions over sampled probes, with worst
// margins reported. Sampled, not symbolic; a pass certifies the probe set
// only.

struct DriftReport {
  std::string description;
  bool passed = false;
  double worst_margin = 0.0;
  double tol = 0.0;     // tolerance at the reported worst probe
  Vec worst_x;          // worst probe position (a difference x-y for coupled
                        // audits); empty when no single position applies
  int worst_regime = -1;   // zero-based; rendered with labels 1..m
  int worst_measure = -1;  // index into the supplied measure or coupling list
  // Contraction audits label both forms: -1 not applicable, else 0/1.
  int integral_passed = -1;
  int pointwise_passed = -1;
  std::vector<std::string> notes;

  static std::string csv_header();
  std::string csv_row() const;
  std::string text() const;
};

/// LV(t,x,mu,i) = b . grad V + (1/2) tr(sigma sigma^T hess V)
///             + sum_{j != i} q_ij(x) (V(x,j) - V(x,i)).
/// Non-finite intermediates raise an error naming the offending part.
double apply_generator(const model::ModelSpec& spec,
                       const model::LyapunovSpec& lyap, double t, const Vec& x,
                       const model::MeasureStats& stats, int i);

/// Coupled generator on differences:
///   (b(t,x,mu,i) - b(t,y,nu,i)) . grad Vtilde(x-y)
///   + (1/2) tr(hess Vtilde(x-y) A),  A = (sigma_x - sigma_y)(...)^T.
double apply_coupled_generator(const model::ModelSpec& spec,
                               const model::LyapunovSpec& lyap, double t,
                               const Vec& x, const Vec& y,
                               const model::MeasureStats& stats_mu,
                               const model::MeasureStats& stats_nu, int i);

/// Drift condition audit: margin LV - lambda1 V - lambda2 mu(phi) at every
/// (position, regime, measure) combination. Also verifies phi <= V at all
/// probes and that the minima of V over radius shells of the probe set grow
/// with the radius. Tolerance per probe: 1e-9 with analytic derivatives,
/// else 1e-6 (1 + |LV|).
DriftReport check_drift_H2(const model::ModelSpec& spec,
                           const model::LyapunovSpec& lyap,
                           const std::vector<Vec>& positions,
                           const std::vector<measures::EmpiricalMeasure>& mus,
                           double t = 0.0);

/// One discrete coupling: paired atoms (x_k, y_k), a regime per pair. Its
/// marginals are the measure pair fed to the coefficients.
struct PairedCloud {
  Mat x, y;                  // dim x K
  std::vector<int> regimes;  // size K, zero-based
};

struct ContractionOptions {
  bool use_theta = false;  // audit Vhat against the per-regime rate theta
                           // instead of Vtilde against gamma
  double gamma2 = 0.0;     // allowance gamma2 * W_Vtilde(marginals) added to
                           // the right-hand side
  std::optional<double> rate_override;  // audit this rate instead
};

/// Contraction audit over discrete couplings: the integral form
/// avg L~V <= -rate avg V (+ allowance) decides the pass flag; the stricter
/// pointwise form is evaluated alongside and labeled in the report.
DriftReport check_contraction(const model::ModelSpec& spec,
                              const model::LyapunovSpec& lyap,
                              const std::vector<PairedCloud>& couplings,
                              const ContractionOptions& opts = {});

struct BoundReport {
  bool passed = false;
  double worst_margin = 0.0;  // max over times of EV / bound - 1
  double worst_t = 0.0;
  std::string text() const;
};

/// Asserts EV(t) <= e^{(lambda1+lambda2) t} EV(0) (1 + delta) at every
/// recorded time of the series. Errors when the series has no EV column.
BoundReport moment_bound_check(const particle::TimeSeries& series,
                               const model::LyapunovSpec& lyap, double delta);

/// Structural audit of the coupled costs: Vtilde(0) = 0, Vhat(0) = 0,
/// V >= 0 on the probes, and the empirical constant
/// max Vhat(x-y) / max(Vhat(x), Vhat(y)) over probe pairs, which must not
/// exceed K_hat. The worst margin is that empirical constant minus K_hat.
DriftReport check_coupled_structure(const model::LyapunovSpec& lyap,
                                    const std::vector<Vec>& probes);

}  // namespace mvx::lyapunov
