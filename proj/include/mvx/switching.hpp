#pragma once

#include "mvx/model.hpp"
#include "mvx/rng.hpp"

#include <Eigen/Eigenvalues>

#include <utility>

namespace mvx::switching {

using model::RateMatrix;
using model::check_q_property;

// Regime-chain stepping. The chain is represented through consecutive jump
// intervals on the positive axis, one per ordered regime pair, so a single
// uniform mark decides both whether a jump fires and where it goes. Two
// samplers share that representation: an exact thinning scheme driven by a
// dominating Poisson clock, and a cheap first-order scheme.

/// Mark interval for one ordered pair: marks z in [lo, hi) move `from` to
/// `to`. Intervals are laid out consecutively in lexicographic (from, to)
/// order over all ordered pairs with from != to, starting at 0; the interval
/// length is q_{from,to}.
struct JumpInterval {
  int from = 0, to = 0;
  double lo = 0.0, hi = 0.0;
};

/// Interval layout of a rate matrix. Zero-rate pairs get empty intervals.
inline std::vector<JumpInterval> interval_layout(const Mat& Q) {
  const int m = static_cast<int>(Q.rows());
  std::vector<JumpInterval> out;
  out.reserve(static_cast<std::size_t>(m) * (m - 1));
  double off = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      const double len = std::max(0.0, Q(i, j));
      out.push_back({i, j, off, off + len});
      off += len;
    }
  return out;
}

/// Jump size triggered by mark z for a chain currently in regime i: returns
/// j - i when z falls in the (i, j) interval of the layout, else 0. Marks in
/// intervals that belong to other source regimes are thinned away, as are
/// marks beyond the last interval.
inline int h_function(const Mat& Q, int i, double z) {
  const int m = static_cast<int>(Q.rows());
  double off = 0.0;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      if (b == a) continue;
      off += std::max(0.0, Q(a, b));
      if (z < off) return a == i ? b - i : 0;
    }
  return 0;
}

inline int h_function(const RateMatrix& rates, const Vec& x, int i, double z) {
  return h_function(rates.evaluate(x), i, z);
}

enum class SwitchMode { FirstOrder, Thinning };

inline SwitchMode parse_switch_mode(const std::string& s) {
  if (s == "thinning") return SwitchMode::Thinning;
  if (s == "first-order") return SwitchMode::FirstOrder;
  throw SimError("unknown switch mode '" + s +
                 "' (expected thinning or first-order)");
}

inline std::string to_string(SwitchMode m) {
  return m == SwitchMode::Thinning ? "thinning" : "first-order";
}

/// Advances regime i over one step of length dt under the fixed rate matrix Q
/// whose entries are bounded by `bound`.
///
/// Thinning: marks arrive on a Poisson clock of rate m * bound, which
/// dominates the total interval length; each mark z ~ U[0, m * bound) is fed
/// through h_function with the regime updated between marks. For a fixed Q
/// the step distribution is exactly the matrix exponential.
///
/// FirstOrder: one categorical draw with P(i -> j) = q_ij * dt, which
/// requires dt * bound * (m - 1) <= 1/2.
inline int step_regime_matrix(const Mat& Q, double bound, int i, double dt,
                              SwitchMode mode, RngStream& g) {
  const int m = static_cast<int>(Q.rows());
  if (i < 0 || i >= m) throw SimError("regime index out of range");
  if (dt < 0.0) throw SimError("negative time step");
  if (dt == 0.0 || m == 1) return i;

  if (mode == SwitchMode::Thinning) {
    const double big = static_cast<double>(m) * bound;
    if (big == 0.0) return i;
    const int marks = g.poisson(big * dt);
    for (int k = 0; k < marks; ++k) i += h_function(Q, i, big * g.uniform());
    return i;
  }

  if (dt * bound * (m - 1) > 0.5)
    throw SimError("first-order switching needs dt * bound * (m-1) <= 0.5; "
                   "got " + fmt6(dt * bound * (m - 1)));
  const double u = g.uniform();
  double acc = 0.0;
  for (int j = 0; j < m; ++j) {
    if (j == i) continue;
    acc += std::max(0.0, Q(i, j)) * dt;
    if (u < acc) return j;
  }
  return i;
}

/// State-dependent version: rates are evaluated at the raw (untruncated)
/// position and frozen for the step.
inline int step_regime(const RateMatrix& q, const Vec& x, int i, double dt,
                       SwitchMode mode, RngStream& g) {
  return step_regime_matrix(q.evaluate(x), q.bound, i, dt, mode, g);
}

/// Entry bound for the coupled generator when both marginals are bounded by
/// `bound`: the worst diagonal is twice the worst marginal outflow.
inline double coupled_bound(double bound, int m) {
  return 2.0 * (m - 1) * bound;
}

/// Basic coupling of two rate matrices A and B: a generator on pair states
/// (k, l), indexed k * m + l, under which the first coordinate is a chain
/// with rates A, the second with rates B, and joint moves to equal regimes
/// carry as much rate as the marginals allow. With the diagonal-zeroed rows
/// of A and B, for each target j the mass A_kj ^ B_lj moves both coordinates
/// together to (j, j) and the residuals (A_kj - B_lj)+ and (B_lj - A_kj)+
/// move one coordinate alone. Once the coordinates agree and A = B they never
/// separate.
inline Mat basic_coupling(const Mat& A, const Mat& B) {
  const int m = static_cast<int>(A.rows());
  if (B.rows() != m || A.cols() != m || B.cols() != m)
    throw SimError("basic_coupling: size mismatch");
  check_q_property(A, A.size() ? A.cwiseAbs().maxCoeff() : 0.0);
  check_q_property(B, B.size() ? B.cwiseAbs().maxCoeff() : 0.0);
  Mat C = Mat::Zero(m * m, m * m);
  auto idx = [m](int k, int l) { return k * m + l; };
  for (int k = 0; k < m; ++k)
    for (int l = 0; l < m; ++l) {
      const int p = idx(k, l);
      for (int j = 0; j < m; ++j) {
        const double a = j == k ? 0.0 : std::max(0.0, A(k, j));
        const double b = j == l ? 0.0 : std::max(0.0, B(l, j));
        const double joint = std::min(a, b);
        if (joint > 0.0) C(p, idx(j, j)) += joint;
        if (a - b > 0.0 && j != k) C(p, idx(j, l)) += a - b;
        if (b - a > 0.0 && j != l) C(p, idx(k, j)) += b - a;
      }
      C(p, p) = 0.0;
      C(p, p) = -C.row(p).sum();
    }
  return C;
}

/// x-dependent coupled generator built from one marginal rate matrix
/// evaluated at two positions.
struct CoupledRateMatrix {
  int m = 0;
  std::function<Mat(const Vec&, const Vec&)> evaluate;
  double bound = 0.0;
};

inline CoupledRateMatrix make_basic_coupling(const RateMatrix& q) {
  CoupledRateMatrix c;
  c.m = q.m;
  c.bound = coupled_bound(q.bound, q.m);
  auto eval = q.evaluate;
  c.evaluate = [eval](const Vec& x1, const Vec& x2) {
    return basic_coupling(eval(x1), eval(x2));
  };
  return c;
}

/// One step of the basic-coupling pair chain. Rates for the two coordinates
/// are evaluated at x1 and x2 and frozen for the step; the pair state then
/// advances as a single chain on m * m states.
inline std::pair<int, int> step_pair_basic(const RateMatrix& q, const Vec& x1,
                                           const Vec& x2, int i, int j,
                                           double dt, SwitchMode mode,
                                           RngStream& g) {
  const int m = q.m;
  const Mat C = basic_coupling(q.evaluate(x1), q.evaluate(x2));
  const int p = step_regime_matrix(C, coupled_bound(q.bound, m), i * m + j, dt,
                                   mode, g);
  return {p / m, p % m};
}

/// One step of the meet-and-merge pair: once the regimes agree they consume
/// the same marks and stay equal forever; while they differ they move
/// independently from consecutive draws of the stream. Only sound for a
/// constant rate matrix (a shared mark produces a shared jump only if both
/// chains see the same intervals).
inline std::pair<int, int> meet_and_merge_step(
    const RateMatrix& q, int i, int j, double dt, RngStream& g,
    SwitchMode mode = SwitchMode::Thinning) {
  if (q.x_dependent)
    throw SimError("meet-and-merge coupling requires a constant rate matrix; "
                   "use the basic coupling for x-dependent rates");
  const Mat Q = q.evaluate(Vec());
  if (i == j) {
    const int ni = step_regime_matrix(Q, q.bound, i, dt, mode, g);
    return {ni, ni};
  }
  return {step_regime_matrix(Q, q.bound, i, dt, mode, g),
          step_regime_matrix(Q, q.bound, j, dt, mode, g)};
}

/// Decay rate of the meeting-time tail for two independent chains with the
/// constant generator Q: the spectral abscissa, negated, of the product
/// generator killed on the diagonal set {(j, j)}. For two independent copies
/// the product generator acts as A (x) I + I (x) A; killing removes the rows
/// and columns of the diagonal pair states.
inline double meeting_rate(const Mat& Q) {
  const int m = static_cast<int>(Q.rows());
  if (m < 2) throw SimError("meeting_rate needs at least two regimes");
  const int n = m * m - m;
  std::vector<int> off;
  off.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < m; ++k)
    for (int l = 0; l < m; ++l)
      if (k != l) off.push_back(k * m + l);
  Mat G = Mat::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    const int k = off[static_cast<std::size_t>(a)] / m;
    const int l = off[static_cast<std::size_t>(a)] % m;
    for (int b = 0; b < n; ++b) {
      const int kj = off[static_cast<std::size_t>(b)] / m;
      const int lj = off[static_cast<std::size_t>(b)] % m;
      if (kj == k && lj == l)
        G(a, b) = Q(k, k) + Q(l, l);
      else if (lj == l)
        G(a, b) = Q(k, kj);
      else if (kj == k)
        G(a, b) = Q(l, lj);
    }
  }
  const Eigen::EigenSolver<Mat> es(G);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::int64_t k = 0; k < es.eigenvalues().size(); ++k)
    worst = std::max(worst, es.eigenvalues()[k].real());
  return -worst;
}

}  // namespace mvx::switching
