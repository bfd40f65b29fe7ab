#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvx/measures.hpp"
#include "mvx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace mvx;
using namespace mvx::measures;

namespace {

EmpiricalMeasure cloud1d(std::initializer_list<double> xs) {
  return EmpiricalMeasure::from_samples(std::vector<double>(xs));
}

EmpiricalMeasure random_cloud(int dim, std::int64_t n, std::uint64_t seed,
                              std::uint32_t salt, bool with_regimes) {
  Mat pts(dim, n);
  std::vector<int> regs(static_cast<std::size_t>(n));
  RngStream g(seed, salt, 0, StreamTag::Init);
  for (std::int64_t k = 0; k < n; ++k) {
    for (int j = 0; j < dim; ++j) pts(j, k) = 4.0 * g.uniform() - 2.0;
    regs[static_cast<std::size_t>(k)] = static_cast<int>(g.uniform_index(2));
  }
  return with_regimes ? EmpiricalMeasure::from_points(pts, regs)
                      : EmpiricalMeasure::from_points(pts);
}

// optimum over all 1-1 couplings of two uniform n-atom clouds
double brute_force(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                   const GroundCost& cost) {
  const int n = static_cast<int>(mu.size());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int k = 0; k < n; ++k)
      total += cost.pair_cost(mu.atoms.col(k), mu.regime(k),
                              nu.atoms.col(perm[static_cast<std::size_t>(k)]),
                              nu.regime(perm[static_cast<std::size_t>(k)]));
    best = std::min(best, total / n);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return cost.finalize(best);
}

}  // namespace

TEST_CASE("quantile coupling hand values") {
  CHECK(wasserstein_1d(cloud1d({0.0, 2.0}), cloud1d({1.0, 3.0}), 1) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(wasserstein_1d(cloud1d({0.0, 2.0}), cloud1d({1.0, 3.0}), 2) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK(wasserstein_1d(cloud1d({0.0}), cloud1d({1.0, 3.0}), 1) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(wasserstein_1d(cloud1d({0.0}), cloud1d({1.0, 3.0}), 2) ==
        doctest::Approx(std::sqrt(5.0)).epsilon(1e-15));
  CHECK(wasserstein_1d(cloud1d({5.0, -1.0}), cloud1d({-1.0, 5.0}), 2) == 0.0);
}

TEST_CASE("quantile coupling with unequal weights") {
  auto mu = cloud1d({0.0, 1.0});
  mu.weights.resize(2);
  mu.weights << 0.75, 0.25;
  const auto nu = cloud1d({0.0, 1.0});
  // move 0.25 of mass from 0 to 1
  CHECK(wasserstein_1d(mu, nu, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("assignment solver on a known matrix") {
  Mat cost(3, 3);
  cost << 4.0, 1.0, 3.0,
          2.0, 0.0, 5.0,
          3.0, 2.0, 2.0;
  const auto [value, assign] = solve_assignment(cost);
  CHECK(value == doctest::Approx(5.0).epsilon(1e-12));
  REQUIRE(assign.size() == 3);
  // optimal: row 0 -> col 1, row 1 -> col 0, row 2 -> col 2
  CHECK(assign[0] == 1);
  CHECK(assign[1] == 0);
  CHECK(assign[2] == 2);
}

TEST_CASE("assignment matches brute force on random instances") {
  for (int rep = 0; rep < 10; ++rep) {
    const auto mu = random_cloud(2, 6, 500 + rep, 1, true);
    const auto nu = random_cloud(2, 6, 500 + rep, 2, true);
    for (const auto& cost :
         {GroundCost::euclidean(1), GroundCost::euclidean(2),
          GroundCost::product([](const Vec& z) { return z.squaredNorm(); })}) {
      const auto got = ot_cost(mu, nu, cost);
      CHECK_FALSE(got.subsampled);
      CHECK(got.value ==
            doctest::Approx(brute_force(mu, nu, cost)).epsilon(1e-10));
    }
  }
}

TEST_CASE("assignment agrees with the quantile coupling in one dimension") {
  for (int rep = 0; rep < 10; ++rep) {
    const auto mu = random_cloud(1, 40, 700 + rep, 1, false);
    const auto nu = random_cloud(1, 40, 700 + rep, 2, false);
    for (int p : {1, 2}) {
      const auto got = ot_cost(mu, nu, GroundCost::euclidean(p));
      CHECK(got.value ==
            doctest::Approx(wasserstein_1d(mu, nu, p)).epsilon(1e-10));
    }
  }
}

TEST_CASE("product cost separates regimes at zero displacement") {
  Mat pt = Mat::Zero(1, 1);
  const auto mu = EmpiricalMeasure::from_points(pt, {0});
  const auto nu = EmpiricalMeasure::from_points(pt, {1});
  const auto cost = GroundCost::product([](const Vec& z) {
    return z.squaredNorm();
  });
  CHECK(ot_cost(mu, nu, cost).value == doctest::Approx(1.0).epsilon(1e-15));
  const auto same = EmpiricalMeasure::from_points(pt, {0});
  CHECK(ot_cost(mu, same, cost).value == 0.0);
}

TEST_CASE("euclidean-2 cost reports the root of the transported total") {
  const auto mu = cloud1d({0.0, 0.0});
  const auto nu = cloud1d({2.0, 2.0});
  CHECK(ot_cost(mu, nu, GroundCost::euclidean(2)).value ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("truncated cost caps far atoms") {
  const auto mu = cloud1d({0.5, 100.0});
  const auto nu = cloud1d({0.5, -100.0});
  // projected atoms {0.5, 2} vs {0.5, -2}; crossing beats the identity
  // pairing: (6.25 + 2.25) / 2 = 4.25
  CHECK(w_truncated(mu, nu, 2.0) ==
        doctest::Approx(std::sqrt(4.25)).epsilon(1e-12));
}

TEST_CASE("oversized inputs are subsampled deterministically") {
  const auto mu = random_cloud(1, 700, 31, 1, false);
  const auto nu = random_cloud(1, 700, 31, 2, false);
  OtOptions opts;
  const auto a = ot_cost(mu, nu, GroundCost::euclidean(2), opts);
  const auto b = ot_cost(mu, nu, GroundCost::euclidean(2), opts);
  CHECK(a.subsampled);
  CHECK(a.solved_size == 512);
  CHECK(a.value == b.value);

  opts.subsample_seed = 99;
  const auto c = ot_cost(mu, nu, GroundCost::euclidean(2), opts);
  CHECK(c.value != a.value);

  opts.allow_subsample = false;
  CHECK_THROWS_AS((void)ot_cost(mu, nu, GroundCost::euclidean(2), opts),
                  SimError);
}

TEST_CASE("subsample draws distinct atoms and respects the salt") {
  const auto mu = random_cloud(1, 100, 47, 1, true);
  const auto s1 = subsample(mu, 30, 5, 1);
  const auto s2 = subsample(mu, 30, 5, 1);
  const auto s3 = subsample(mu, 30, 5, 2);
  CHECK(s1.size() == 30);
  CHECK(s1.has_regimes());
  CHECK((s1.atoms - s2.atoms).norm() == 0.0);
  CHECK((s1.atoms - s3.atoms).norm() != 0.0);
  std::vector<double> vals;
  for (std::int64_t k = 0; k < s1.size(); ++k) vals.push_back(s1.atoms(0, k));
  std::sort(vals.begin(), vals.end());
  CHECK(std::adjacent_find(vals.begin(), vals.end()) == vals.end());
}

TEST_CASE("binned weighted variation hand value") {
  const auto mu = cloud1d({0.5});
  const auto nu = cloud1d({1.5});
  const auto res = weighted_tv_binned(
      mu, nu, [](const Vec& x) { return x.squaredNorm(); },
      BinSpec::regular1d(0.0, 2.0, 2));
  // full unit of mass moves between cells weighted 0.25 and 2.25
  CHECK(res.value == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(res.occupied_bins == 2);
  CHECK(res.total_bins == 2);
  CHECK(res.eps_bin > 0.0);
}

TEST_CASE("binned variation vanishes on identical clouds") {
  const auto mu = cloud1d({0.25, 0.75, 1.25});
  const auto res = weighted_tv_binned(
      mu, mu, [](const Vec& x) { return x.squaredNorm(); },
      BinSpec::regular1d(0.0, 2.0, 4));
  CHECK(res.value == 0.0);
}

TEST_CASE("binned variation rejects atoms outside the grid") {
  CHECK_THROWS_AS((void)weighted_tv_binned(
                      cloud1d({3.0}), cloud1d({1.0}),
                      [](const Vec&) { return 1.0; },
                      BinSpec::regular1d(0.0, 2.0, 2)),
                  SimError);
}

TEST_CASE("measure validation") {
  auto mu = cloud1d({1.0, 2.0});
  CHECK_NOTHROW(mu.validate());
  mu.weights.resize(2);
  mu.weights << 0.5, 0.6;
  CHECK_THROWS_AS(mu.validate(), SimError);
  mu.weights << 0.5, 0.5;
  CHECK_NOTHROW(mu.validate());
  mu.regimes = {0};
  CHECK_THROWS_AS(mu.validate(), SimError);
}
