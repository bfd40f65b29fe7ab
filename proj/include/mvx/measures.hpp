#pragma once

#include "mvx/common.hpp"

#include <optional>
#include <utility>

namespace mvx::measures {

// Empirical measures and the transport distances between them. With uniform
// weights and equal atom counts every distance here reduces to an assignment
// problem, solved exactly up to a size cap; one-dimensional inputs also have
// an independent quantile-coupling path used as a cross-check.

/// Weighted atoms on R^d, optionally labeled with a regime (making the
/// measure live on R^d x {1..m}). Empty `weights` means uniform 1/K.
struct EmpiricalMeasure {
  Mat atoms;                 // d x K
  std::vector<int> regimes;  // empty or size K, zero-based labels
  Vec weights;               // empty or size K

  static EmpiricalMeasure from_points(Mat pts) {
    EmpiricalMeasure mu;
    mu.atoms = std::move(pts);
    return mu;
  }
  static EmpiricalMeasure from_points(Mat pts, std::vector<int> regs) {
    EmpiricalMeasure mu;
    mu.atoms = std::move(pts);
    mu.regimes = std::move(regs);
    return mu;
  }
  static EmpiricalMeasure from_samples(const std::vector<double>& xs) {
    EmpiricalMeasure mu;
    mu.atoms.resize(1, static_cast<std::int64_t>(xs.size()));
    for (std::size_t k = 0; k < xs.size(); ++k)
      mu.atoms(0, static_cast<std::int64_t>(k)) = xs[k];
    return mu;
  }

  std::int64_t size() const { return atoms.cols(); }
  int dim() const { return static_cast<int>(atoms.rows()); }
  bool has_regimes() const { return !regimes.empty(); }
  bool uniform() const { return weights.size() == 0; }
  double weight(std::int64_t k) const {
    return uniform() ? 1.0 / static_cast<double>(size()) : weights[k];
  }
  int regime(std::int64_t k) const {
    return has_regimes() ? regimes[static_cast<std::size_t>(k)] : 0;
  }

  void validate() const {
    if (size() == 0) throw SimError("empirical measure has no atoms");
    if (!atoms.allFinite())
      throw SimError("empirical measure has non-finite atoms");
    if (!regimes.empty() &&
        static_cast<std::int64_t>(regimes.size()) != size())
      throw SimError("regime labels do not match atom count");
    if (weights.size() != 0) {
      if (weights.size() != size())
        throw SimError("weights do not match atom count");
      if (weights.minCoeff() < 0.0)
        throw SimError("negative atom weight");
      if (std::abs(weights.sum() - 1.0) > 1e-12)
        throw SimError("weights sum to " + fmt17(weights.sum()) +
                       ", expected 1");
    }
  }
};

/// Ground cost between atoms, with the per-pair value and the final transform
/// applied to the transported total:
///   Euclidean-p:        |x-y|^p summed, total^(1/p)   (the Wasserstein W_p)
///   TruncatedEuclidean: |phi_R(x)-phi_R(y)|^2, sqrt
///   Lyapunov:           Vtilde(x-y), identity         (the quasi-distance)
///   Product:            sqrt(1_{i!=j} + Vhat(x-y)), identity
struct GroundCost {
  enum class Kind { Euclidean1, Euclidean2, TruncatedEuclidean, Lyapunov,
                    Product };
  Kind kind = Kind::Euclidean2;
  double radius = 0.0;
  std::function<double(const Vec&)> f;  // Vtilde or Vhat on differences

  static GroundCost euclidean(int p) {
    if (p != 1 && p != 2) throw SimError("Euclidean cost needs p in {1,2}");
    GroundCost c;
    c.kind = p == 1 ? Kind::Euclidean1 : Kind::Euclidean2;
    return c;
  }
  static GroundCost truncated_euclidean(double R) {
    if (R <= 0.0) throw SimError("truncation radius must be positive");
    GroundCost c;
    c.kind = Kind::TruncatedEuclidean;
    c.radius = R;
    return c;
  }
  static GroundCost lyapunov(std::function<double(const Vec&)> vtilde) {
    GroundCost c;
    c.kind = Kind::Lyapunov;
    c.f = std::move(vtilde);
    return c;
  }
  static GroundCost product(std::function<double(const Vec&)> vhat) {
    GroundCost c;
    c.kind = Kind::Product;
    c.f = std::move(vhat);
    return c;
  }

  bool needs_regimes() const { return kind == Kind::Product; }

  double pair_cost(const Vec& x, int i, const Vec& y, int j) const {
    switch (kind) {
      case Kind::Euclidean1:
        return (x - y).norm();
      case Kind::Euclidean2:
        return (x - y).squaredNorm();
      case Kind::TruncatedEuclidean:
        return (truncate(x, radius) - truncate(y, radius)).squaredNorm();
      case Kind::Lyapunov:
        return f(x - y);
      case Kind::Product:
        return std::sqrt((i != j ? 1.0 : 0.0) + f(x - y));
    }
    throw SimError("unreachable");
  }

  double finalize(double total) const {
    const double v = std::max(0.0, total);
    switch (kind) {
      case Kind::Euclidean2:
      case Kind::TruncatedEuclidean:
        return std::sqrt(v);
      default:
        return v;
    }
  }

  std::string name() const {
    switch (kind) {
      case Kind::Euclidean1: return "W1";
      case Kind::Euclidean2: return "W2";
      case Kind::TruncatedEuclidean: return "W2-truncated";
      case Kind::Lyapunov: return "W-Vtilde";
      case Kind::Product: return "W-d";
    }
    return "?";
  }
};

/// Exact Wasserstein-p between one-dimensional measures by quantile coupling;
/// handles general weights and unequal atom counts.
double wasserstein_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                      int p);

/// Exact minimum-cost assignment on a square cost matrix (shortest augmenting
/// paths with potentials). Returns the optimal value and the row-to-column
/// assignment.
std::pair<double, std::vector<int>> solve_assignment(const Mat& cost);

struct OtOptions {
  int n_exact = 512;            // largest size solved exactly
  bool allow_subsample = true;  // larger inputs: seeded subsample per side
  std::uint64_t subsample_seed = 0;
};

struct OtResult {
  double value = 0.0;
  std::vector<int> assignment;  // atom k of mu pairs with assignment[k] of nu
  bool subsampled = false;
  std::int64_t solved_size = 0;
};

/// Optimal coupling cost between uniform-weight empirical measures. Inputs
/// larger than n_exact (or of unequal sizes, subsampling permitting) are
/// first subsampled without replacement using the seed in the options; the
/// returned assignment refers to the subsampled atoms in that case.
OtResult ot_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                 const GroundCost& cost, const OtOptions& opts = {});

/// W_{2,N}: Wasserstein-2 after radially projecting every atom onto the ball
/// of radius `radius`.
double w_truncated(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                   double radius, const OtOptions& opts = {});

/// Seeded subsample of `target` atoms without replacement (uniform weights).
/// `salt` separates the two sides of one comparison.
EmpiricalMeasure subsample(const EmpiricalMeasure& mu, std::int64_t target,
                           std::uint64_t seed, std::uint32_t salt);

/// Regular grid over [lo, hi] with `nbins` cells per dimension (d <= 3).
struct BinSpec {
  Vec lo, hi;
  std::vector<int> nbins;

  static BinSpec regular1d(double lo, double hi, int n) {
    BinSpec b;
    b.lo.resize(1);
    b.hi.resize(1);
    b.lo[0] = lo;
    b.hi[0] = hi;
    b.nbins = {n};
    return b;
  }
};

struct TvResult {
  double value = 0.0;
  std::int64_t occupied_bins = 0;
  std::int64_t total_bins = 0;
  double eps_bin = 0.0;  // max over occupied bins of the weight oscillation
};

/// Binned estimator of the weighted total variation
///   sum_bins weight(center) * |mu(bin) - nu(bin)|,
/// where `weight` plays the role of the dominating function. For measures
/// with regimes the sum also runs over regimes and the weight of cell
/// (center, i) is sqrt(1_{i != 1} + weight(center)), the product-space cost
/// against the reference (0, regime 1). Atoms outside [lo, hi] are an error.
TvResult weighted_tv_binned(const EmpiricalMeasure& mu,
                            const EmpiricalMeasure& nu,
                            const std::function<double(const Vec&)>& weight,
                            const BinSpec& bins);

}  // namespace mvx::measures
