#include "mvx/measures.hpp"

#include "mvx/rng.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace mvx::measures {

double wasserstein_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                      int p) {
  mu.validate();
  nu.validate();
  if (mu.dim() != 1 || nu.dim() != 1)
    throw SimError("wasserstein_1d needs one-dimensional measures, got d = " +
                   std::to_string(mu.dim()) + " and " +
                   std::to_string(nu.dim()));
  if (p != 1 && p != 2) throw SimError("wasserstein_1d supports p in {1,2}");

  auto sorted = [](const EmpiricalMeasure& m) {
    std::vector<std::pair<double, double>> a(
        static_cast<std::size_t>(m.size()));
    for (std::int64_t k = 0; k < m.size(); ++k)
      a[static_cast<std::size_t>(k)] = {m.atoms(0, k), m.weight(k)};
    std::sort(a.begin(), a.end());
    return a;
  };
  const auto a = sorted(mu);
  const auto b = sorted(nu);

  // Walk the two quantile functions in lockstep, pairing mass in CDF order.
  double acc = 0.0;
  std::size_t ia = 0, ib = 0;
  double ra = a[0].second, rb = b[0].second;
  while (ia < a.size() && ib < b.size()) {
    const double step = std::min(ra, rb);
    if (step > 0.0) {
      const double d = std::abs(a[ia].first - b[ib].first);
      acc += step * (p == 1 ? d : d * d);
    }
    ra -= step;
    rb -= step;
    if (ra <= 1e-15) {
      ++ia;
      ra = ia < a.size() ? a[ia].second : 0.0;
    }
    if (rb <= 1e-15) {
      ++ib;
      rb = ib < b.size() ? b[ib].second : 0.0;
    }
  }
  return p == 1 ? acc : std::sqrt(std::max(0.0, acc));
}

std::pair<double, std::vector<int>> solve_assignment(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n)
    throw SimError("assignment needs a square cost matrix");
  if (n == 0) return {0.0, {}};
  if (!cost.allFinite())
    throw SimError("assignment cost matrix has non-finite entries");

  // Shortest augmenting paths with dual potentials; column slot n is the
  // virtual root holding the row currently being inserted.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n), 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(n) + 1, -1);
  std::vector<int> way(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    match[static_cast<std::size_t>(n)] = i;
    int j0 = n;
    std::vector<double> minv(static_cast<std::size_t>(n), inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = -1;
      for (int j = 0; j < n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0, j) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      if (j1 < 0)
        throw SimError("assignment solver found no augmenting column");
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] +=
              delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != -1);
    while (j0 != n) {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    }
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    const int i = match[static_cast<std::size_t>(j)];
    assign[static_cast<std::size_t>(i)] = j;
    total += cost(i, j);
  }
  return {total, std::move(assign)};
}

EmpiricalMeasure subsample(const EmpiricalMeasure& mu, std::int64_t target,
                           std::uint64_t seed, std::uint32_t salt) {
  mu.validate();
  if (!mu.uniform())
    throw SimError("subsampling is defined for uniform weights only");
  if (target <= 0) throw SimError("subsample target must be positive");
  if (target >= mu.size()) return mu;

  std::vector<std::int64_t> idx(static_cast<std::size_t>(mu.size()));
  std::iota(idx.begin(), idx.end(), std::int64_t{0});
  RngStream g(seed, salt, 0, StreamTag::Subsample);
  for (std::int64_t k = 0; k < target; ++k) {
    const std::int64_t j =
        k + g.uniform_index(static_cast<std::uint32_t>(mu.size() - k));
    std::swap(idx[static_cast<std::size_t>(k)],
              idx[static_cast<std::size_t>(j)]);
  }

  EmpiricalMeasure out;
  out.atoms.resize(mu.atoms.rows(), target);
  if (mu.has_regimes()) out.regimes.resize(static_cast<std::size_t>(target));
  for (std::int64_t k = 0; k < target; ++k) {
    out.atoms.col(k) = mu.atoms.col(idx[static_cast<std::size_t>(k)]);
    if (mu.has_regimes())
      out.regimes[static_cast<std::size_t>(k)] =
          mu.regimes[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
  }
  return out;
}

OtResult ot_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                 const GroundCost& cost, const OtOptions& opts) {
  mu.validate();
  nu.validate();
  if (mu.dim() != nu.dim())
    throw SimError("ot_cost: dimension mismatch (" + std::to_string(mu.dim()) +
                   " vs " + std::to_string(nu.dim()) + ")");
  if (cost.needs_regimes() && (!mu.has_regimes() || !nu.has_regimes()))
    throw SimError("the product-space cost needs regime labels on both "
                   "measures");
  if (!mu.uniform() || !nu.uniform())
    throw SimError("ot_cost solves uniform-weight assignments; weighted "
                   "measures are supported by wasserstein_1d only");

  OtResult res;
  EmpiricalMeasure a = mu, b = nu;
  const std::int64_t target =
      std::min<std::int64_t>(opts.n_exact, std::min(a.size(), b.size()));
  if (a.size() != b.size() || a.size() > target) {
    if (!opts.allow_subsample)
      throw SimError("ot_cost: sizes " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) +
                     " need equal-size inputs of at most " +
                     std::to_string(opts.n_exact) +
                     " atoms unless subsampling is enabled");
    a = subsample(a, target, opts.subsample_seed, 1);
    b = subsample(b, target, opts.subsample_seed, 2);
    res.subsampled = a.size() != mu.size() || b.size() != nu.size();
  }

  const std::int64_t n = a.size();
  Mat C(n, n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      C(i, j) = cost.pair_cost(a.atoms.col(i), a.regime(i), b.atoms.col(j),
                               b.regime(j));
  auto [total, assign] = solve_assignment(C);
  res.value = cost.finalize(total / static_cast<double>(n));
  res.assignment = std::move(assign);
  res.solved_size = n;
  return res;
}

double w_truncated(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                   double radius, const OtOptions& opts) {
  return ot_cost(mu, nu, GroundCost::truncated_euclidean(radius), opts).value;
}

namespace {

// Cell weight: the dominating function at the cell center, lifted to the
// product space (distance to the reference (0, regime 1)) when regimes are
// present.
double cell_weight(const std::function<double(const Vec&)>& w, const Vec& x,
                   int regime, bool product) {
  if (!product) return w(x);
  return std::sqrt((regime != 0 ? 1.0 : 0.0) + w(x));
}

}  // namespace

TvResult weighted_tv_binned(const EmpiricalMeasure& mu,
                            const EmpiricalMeasure& nu,
                            const std::function<double(const Vec&)>& weight,
                            const BinSpec& bins) {
  mu.validate();
  nu.validate();
  const int d = mu.dim();
  if (nu.dim() != d) throw SimError("weighted_tv_binned: dimension mismatch");
  if (d > 3) throw SimError("binned TV supports d <= 3");
  if (bins.lo.size() != d || bins.hi.size() != d ||
      static_cast<int>(bins.nbins.size()) != d)
    throw SimError("bin spec does not match dimension " + std::to_string(d));
  for (int k = 0; k < d; ++k) {
    if (bins.nbins[static_cast<std::size_t>(k)] < 1)
      throw SimError("bin counts must be positive");
    if (!(bins.lo[k] < bins.hi[k]))
      throw SimError("bin range is empty in dimension " + std::to_string(k));
  }
  if (mu.has_regimes() != nu.has_regimes())
    throw SimError("weighted_tv_binned: one measure has regimes, the other "
                   "does not");
  const bool product = mu.has_regimes();
  int nreg = 1;
  if (product) {
    for (int r : mu.regimes) nreg = std::max(nreg, r + 1);
    for (int r : nu.regimes) nreg = std::max(nreg, r + 1);
  }

  std::int64_t cells = nreg;
  for (int k = 0; k < d; ++k) cells *= bins.nbins[static_cast<std::size_t>(k)];
  if (cells > (std::int64_t{1} << 26))
    throw SimError("bin grid of " + std::to_string(cells) +
                   " cells is too large");

  auto cell_of = [&](const Vec& x, int regime) {
    std::int64_t flat = 0;
    for (int k = 0; k < d; ++k) {
      const int nb = bins.nbins[static_cast<std::size_t>(k)];
      const double w = (bins.hi[k] - bins.lo[k]) / nb;
      if (x[k] < bins.lo[k] || x[k] > bins.hi[k])
        throw SimError("atom at x = " + fmt_vec(x) +
                       " falls outside the bin range [" + fmt6(bins.lo[k]) +
                       ", " + fmt6(bins.hi[k]) + "] in dimension " +
                       std::to_string(k));
      int idx = static_cast<int>((x[k] - bins.lo[k]) / w);
      idx = std::min(idx, nb - 1);
      flat = flat * nb + idx;
    }
    return flat * nreg + regime;
  };

  std::vector<double> ma(static_cast<std::size_t>(cells), 0.0);
  std::vector<double> mb(static_cast<std::size_t>(cells), 0.0);
  for (std::int64_t k = 0; k < mu.size(); ++k)
    ma[static_cast<std::size_t>(cell_of(mu.atoms.col(k), mu.regime(k)))] +=
        mu.weight(k);
  for (std::int64_t k = 0; k < nu.size(); ++k)
    mb[static_cast<std::size_t>(cell_of(nu.atoms.col(k), nu.regime(k)))] +=
        nu.weight(k);

  TvResult res;
  res.total_bins = cells;
  Vec center(d), corner(d);
  for (std::int64_t c = 0; c < cells; ++c) {
    const double pa = ma[static_cast<std::size_t>(c)];
    const double pb = mb[static_cast<std::size_t>(c)];
    if (pa == 0.0 && pb == 0.0) continue;
    ++res.occupied_bins;

    std::int64_t rest = c;
    const int regime = static_cast<int>(rest % nreg);
    rest /= nreg;
    for (int k = d - 1; k >= 0; --k) {
      const int nb = bins.nbins[static_cast<std::size_t>(k)];
      const double w = (bins.hi[k] - bins.lo[k]) / nb;
      const std::int64_t idx = rest % nb;
      rest /= nb;
      center[k] = bins.lo[k] + (static_cast<double>(idx) + 0.5) * w;
    }

    const double wc = cell_weight(weight, center, regime, product);
    res.value += wc * std::abs(pa - pb);

    double osc = 0.0;
    for (int mask = 0; mask < (1 << d); ++mask) {
      for (int k = 0; k < d; ++k) {
        const double half = 0.5 * (bins.hi[k] - bins.lo[k]) /
                            bins.nbins[static_cast<std::size_t>(k)];
        corner[k] = center[k] + ((mask >> k) & 1 ? half : -half);
      }
      osc = std::max(osc, std::abs(cell_weight(weight, corner, regime,
                                               product) - wc));
    }
    res.eps_bin = std::max(res.eps_bin, osc);
  }
  return res;
}

}  // namespace mvx::measures
