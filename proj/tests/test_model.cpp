#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvx/builtin_models.hpp"
#include "mvx/model.hpp"

#include <cmath>

using namespace mvx;
using namespace mvx::model;

namespace {

std::vector<MeasureFunctional> mean_and_square() {
  return {{"mean", [](const Vec& x) { return x[0]; }},
          {"x2", [](const Vec& x) { return x[0] * x[0]; }}};
}

MeasureStats stats1d(double mean, double x2) {
  Vec v(2);
  v << mean, x2;
  return MeasureStats({"mean", "x2"}, v);
}

}  // namespace

TEST_CASE("empirical stats average the functionals") {
  Mat pts(1, 3);
  pts << 1.0, 2.0, 3.0;
  const auto st = compute_stats(mean_and_square(), pts);
  CHECK(st.get("mean") == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(st.get("x2") == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
  CHECK(st[0] == st.get("mean"));
  CHECK_THROWS(st.get("missing"));
}

TEST_CASE("truncated stats see the projected cloud") {
  Mat pts(1, 2);
  pts << 3.0, -1.0;
  const auto st = compute_stats_truncated(mean_and_square(), pts, 2.0);
  // atoms become 2 and -1
  CHECK(st.get("mean") == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(st.get("x2") == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("radial projection onto the ball") {
  Vec x(1);
  x << 3.0;
  CHECK(truncate(x, 2.0)[0] == doctest::Approx(2.0).epsilon(1e-15));
  x << -1.0;
  CHECK(truncate(x, 2.0)[0] == -1.0);  // inside: identity
  Vec y(2);
  y << 3.0, 4.0;
  const Vec ty = truncate(y, 1.0);
  CHECK(ty[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(ty[1] == doctest::Approx(0.8).epsilon(1e-12));
  // radius zero means "no truncation" and is resolved by the caller
  CHECK_THROWS_AS((void)truncate(y, 0.0), SimError);
}

TEST_CASE("rate matrix validity checks") {
  Mat q(2, 2);
  q << -1.0, 1.0, 2.0, -2.0;
  CHECK_NOTHROW(check_q_property(q, 2.0));

  Mat bad = q;
  bad(0, 1) = -0.5;
  CHECK_THROWS_WITH_AS(check_q_property(bad, 2.0),
                       doctest::Contains("negative"), SimError);

  bad = q;
  bad(1, 1) = -1.0;  // row no longer sums to zero
  CHECK_THROWS_AS(check_q_property(bad, 2.0), SimError);

  CHECK_THROWS_AS(check_q_property(q, 0.5), SimError);  // bound exceeded
}

TEST_CASE("constant rate matrix captures its own bound") {
  Mat q(2, 2);
  q << -1.0, 1.0, 2.0, -2.0;
  const auto rates = RateMatrix::constant(q);
  CHECK(rates.m == 2);
  CHECK(rates.bound == 2.0);
  CHECK_FALSE(rates.x_dependent);
  CHECK(rates.evaluate(Vec())(1, 0) == 2.0);
}

TEST_CASE("probe-based generator validation") {
  const auto m = cli::example2();
  std::vector<Vec> probes;
  for (int k = 0; k < 20; ++k)
    probes.push_back(Vec::Constant(1, -3.0 + 0.3 * k));
  const auto rep = validate_q_property(m.spec.q, probes);
  CHECK(rep.passed);
}

TEST_CASE("drift and diffusion evaluation with hand values") {
  const auto m = cli::example1(0.5);
  const auto st = stats1d(0.0, 0.0);

  auto [b1, s1] = evaluate_drift_diffusion(m.spec, 0.0, Vec::Constant(1, 1.0),
                                           st, 0);
  CHECK(b1[0] == doctest::Approx(-3.0).epsilon(1e-15));
  CHECK(s1(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  auto [b2, s2] = evaluate_drift_diffusion(m.spec, 0.0, Vec::Constant(1, 2.0),
                                           st, 1);
  CHECK(b2[0] == doctest::Approx(-4.0).epsilon(1e-15));
  CHECK(s2(0, 0) == doctest::Approx(2.0).epsilon(1e-15));

  auto [b0, s0] = evaluate_drift_diffusion(m.spec, 0.0, Vec::Zero(1), st, 0);
  CHECK(b0[0] == 0.0);
  CHECK(s0(0, 0) == 0.0);

  // the mean enters both coefficients in regime 1
  const auto stm = stats1d(2.0, 4.0);
  auto [bm, sm] = evaluate_drift_diffusion(m.spec, 0.0, Vec::Constant(1, 1.0),
                                           stm, 0);
  CHECK(bm[0] == doctest::Approx(-1.0 - 2.0 * (1.0 + 0.5 * 2.0)).epsilon(1e-15));
  CHECK(sm(0, 0) == doctest::Approx(2.0).epsilon(1e-15));

  CHECK_THROWS_AS(
      (void)evaluate_drift_diffusion(m.spec, 0.0, Vec::Constant(1, 1.0), st, 5),
      SimError);
}

TEST_CASE("coefficient errors name the regime label and time") {
  ModelSpec spec;
  spec.name = "broken";
  spec.dim = 1;
  spec.brownian_dim = 1;
  spec.regimes = 1;
  spec.drift = [](double, const Vec&, const MeasureStats&, int) {
    return Vec::Zero(2);  // wrong dimension
  };
  spec.diffusion = [](double, const Vec&, const MeasureStats&, int) {
    return Mat::Zero(1, 1);
  };
  Mat q(1, 1);
  q << 0.0;
  spec.q = RateMatrix::constant(q);
  CHECK_THROWS_WITH_AS(
      (void)evaluate_drift_diffusion(spec, 0.5, Vec::Zero(1), MeasureStats(),
                                     0),
      doctest::Contains("regime 1"), SimError);
}

TEST_CASE("second-order generator rates of example 2") {
  const auto m = cli::example2();
  const auto st = stats1d(0.0, 0.0);
  // q12 at the origin
  CHECK(m.spec.q.evaluate(Vec::Zero(1))(0, 1) ==
        doctest::Approx(1.0 / 3.0 + 0.25).epsilon(1e-15));
  CHECK(m.spec.q.x_dependent);
  auto [b, s] = evaluate_drift_diffusion(m.spec, 0.0, Vec::Constant(1, 1.0),
                                         st, 0);
  CHECK(b[0] == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(s(0, 0) == 0.0);
}

TEST_CASE("finite differences recover smooth derivatives") {
  auto f = [](const Vec& x) {
    return x[0] * x[0] * x[0] + 2.0 * x[0] * x[1] + x[1] * x[1];
  };
  RngStream g(17, 0, 0, StreamTag::Init);
  for (int k = 0; k < 100; ++k) {
    Vec x(2);
    x << 4.0 * g.uniform() - 2.0, 4.0 * g.uniform() - 2.0;
    const Vec grad = fd_gradient(f, x);
    const Mat hess = fd_hessian(f, x);
    const double gx = 3.0 * x[0] * x[0] + 2.0 * x[1];
    const double gy = 2.0 * x[0] + 2.0 * x[1];
    CHECK(grad[0] == doctest::Approx(gx).epsilon(1e-5));
    CHECK(grad[1] == doctest::Approx(gy).epsilon(1e-5));
    CHECK(hess(0, 0) == doctest::Approx(6.0 * x[0]).epsilon(2e-4));
    CHECK(hess(0, 1) == doctest::Approx(2.0).epsilon(2e-4));
    CHECK(hess(1, 1) == doctest::Approx(2.0).epsilon(2e-4));
  }
}

TEST_CASE("scalar fields fall back to finite differences") {
  ScalarField f;
  f.value = [](const Vec& x) { return x[0] * x[0]; };
  CHECK_FALSE(f.analytic());
  CHECK(f.grad(Vec::Constant(1, 1.5))[0] == doctest::Approx(3.0).epsilon(1e-6));
  f.gradient = [](const Vec& x) { return Vec::Constant(1, 2.0 * x[0]); };
  f.hessian = [](const Vec&) { return Mat::Constant(1, 1, 2.0); };
  CHECK(f.analytic());
  CHECK(f.grad(Vec::Constant(1, 1.5))[0] == 3.0);
}

TEST_CASE("sign convention at the origin") {
  CHECK(sign0(0.0) == 0.0);
  CHECK(sign0(2.5) == 1.0);
  CHECK(sign0(-0.1) == -1.0);
}

TEST_CASE("initial samplers") {
  RngStream g(23, 4, 0, StreamTag::Init);
  const auto pt = init_point1d(1.5, 1);
  CHECK(pt.position(g)[0] == 1.5);
  CHECK(pt.regime(g) == 1);

  const auto un = init_uniform1d(-1.0, 1.0, 0);
  double sum = 0.0;
  for (int k = 0; k < 20000; ++k) {
    RngStream gk(23, static_cast<std::uint32_t>(k), 0, StreamTag::Init);
    const double x = un.position(gk)[0];
    CHECK(x >= -1.0);
    CHECK(x < 1.0);
    sum += x;
  }
  CHECK(std::abs(sum / 20000.0) < 3.0 / std::sqrt(3.0 * 20000.0));

  const auto ga = init_gaussian(Vec::Constant(1, 2.0), Vec::Constant(1, 0.5),
                                0);
  double s1 = 0.0, s2 = 0.0;
  for (int k = 0; k < 20000; ++k) {
    RngStream gk(29, static_cast<std::uint32_t>(k), 0, StreamTag::Init);
    const double x = ga.position(gk)[0];
    s1 += x;
    s2 += x * x;
  }
  const double mean = s1 / 20000.0;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.01));
  CHECK(s2 / 20000.0 - mean * mean == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("builtin registry") {
  CHECK(cli::is_builtin("example1"));
  CHECK(cli::is_builtin("example2"));
  CHECK_FALSE(cli::is_builtin("example3"));
  CHECK_THROWS_WITH_AS(cli::builtin_model("nope", 0.5),
                       doctest::Contains("unknown model"), SimError);
  const auto m = cli::builtin_model("example1", 0.25);
  CHECK(m.lyap.lambda2 == doctest::Approx(2.0 * 0.25 * 0.25).epsilon(1e-15));
  CHECK(m.lyap.gamma == doctest::Approx(2.0 - 2.0 * 0.25 * 0.25).epsilon(1e-15));
}

TEST_CASE("lyapunov bookkeeping") {
  const auto m = cli::example2();
  CHECK(m.lyap.v(0).value(Vec::Constant(1, -2.0)) == 2.0);
  CHECK(m.lyap.v(1).value(Vec::Constant(1, -2.0)) == 4.0);
  CHECK(m.lyap.v_min(Vec::Constant(1, -2.0)) == 2.0);
  CHECK_THROWS_AS((void)m.lyap.v(2), SimError);
  CHECK(m.lyap.lambda1 == doctest::Approx(-5.0 / 12.0).epsilon(1e-15));
  CHECK(m.lyap.theta == 0.5);
}

TEST_CASE("model validation rejects inconsistent pieces") {
  auto m = cli::example1(0.5);
  CHECK_NOTHROW(m.spec.validate());
  m.spec.regimes = 3;  // generator is 2 x 2
  CHECK_THROWS_AS(m.spec.validate(), SimError);
}
