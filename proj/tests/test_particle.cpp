#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mvx/builtin_models.hpp"
#include "mvx/particle.hpp"

#include <cmath>
#include <cstdio>

using namespace mvx;
using namespace mvx::particle;

namespace {

// scalar model dx = a x dt + s x dW + c dW with a constant generator
model::ModelSpec linear_model(double a, double s_lin, double s_const) {
  model::ModelSpec spec;
  spec.name = "linear";
  spec.dim = 1;
  spec.brownian_dim = 1;
  spec.regimes = 1;
  spec.functionals = {{"mean", [](const Vec& x) { return x[0]; }}};
  spec.drift = [a](double, const Vec& x, const model::MeasureStats&, int) {
    return Vec::Constant(1, a * x[0]);
  };
  spec.diffusion = [s_lin, s_const](double, const Vec& x,
                                    const model::MeasureStats&, int) {
    return Mat::Constant(1, 1, s_lin * x[0] + s_const);
  };
  Mat q(1, 1);
  q << 0.0;
  spec.q = model::RateMatrix::constant(q);
  return spec;
}

SimConfig quick_cfg(double dt, double T, std::int64_t n) {
  SimConfig cfg;
  cfg.dt = dt;
  cfg.T = T;
  cfg.particles = n;
  cfg.seed = 12;
  return cfg;
}

}  // namespace

TEST_CASE("initial draws are deterministic in the seed and ensemble tag") {
  const auto spec = linear_model(-1.0, 0.0, 1.0);
  auto cfg = quick_cfg(1e-3, 1.0, 64);
  const auto a = init_ensemble(spec, model::init_uniform1d(-1.0, 1.0, 0), cfg);
  const auto b = init_ensemble(spec, model::init_uniform1d(-1.0, 1.0, 0), cfg);
  CHECK((a.x - b.x).norm() == 0.0);
  cfg.seed = 13;
  const auto c = init_ensemble(spec, model::init_uniform1d(-1.0, 1.0, 0), cfg);
  CHECK((a.x - c.x).norm() != 0.0);
  cfg.seed = 12;
  cfg.ensemble = 1;
  const auto d = init_ensemble(spec, model::init_uniform1d(-1.0, 1.0, 0), cfg);
  CHECK((a.x - d.x).norm() != 0.0);

  const auto pt = init_ensemble(spec, model::init_point1d(0.5, 0), cfg);
  CHECK(pt.x.minCoeff() == 0.5);
  CHECK(pt.x.maxCoeff() == 0.5);
  CHECK(pt.regime[0] == 0);
  CHECK(pt.t == 0.0);
  CHECK(pt.step == 0);
}

TEST_CASE("a noiseless step is the explicit euler update") {
  const auto spec = linear_model(-2.0, 0.0, 0.0);
  SimConfig cfg = quick_cfg(0.01, 0.01, 4);
  const auto ens = init_ensemble(spec, model::init_point1d(1.0, 0), cfg);
  const auto next = euler_step(ens, spec, 0.01, switching::SwitchMode::Thinning);
  for (std::int64_t k = 0; k < 4; ++k)
    CHECK(next.x(0, k) == doctest::Approx(0.98).epsilon(1e-15));
  CHECK(next.t == 0.01);
  CHECK(next.step == 1);
}

TEST_CASE("the brownian increment replays the per-particle stream exactly") {
  const auto spec = linear_model(0.0, 0.0, 1.0);
  SimConfig cfg = quick_cfg(0.04, 0.04, 8);
  auto ens = init_ensemble(spec, model::init_point1d(0.0, 0), cfg);
  advance(ens, spec, cfg);
  for (std::uint32_t k = 0; k < 8; ++k) {
    RngStream g(cfg.seed, k, 0, StreamTag::Brownian);
    const double xi = g.normal_vec(1)[0];
    CHECK(ens.x(0, k) == std::sqrt(0.04) * xi);
  }
}

TEST_CASE("ornstein-uhlenbeck reaches its stationary variance") {
  const auto spec = linear_model(-1.0, 0.0, 1.0);
  SimConfig cfg = quick_cfg(2e-3, 4.0, 5000);
  const auto res = simulate(spec, nullptr, model::init_point1d(0.0, 0), cfg);
  const auto& last = res.series.rows.back();
  const double m = last[res.series.col("moment_mean")];
  double sumsq = 0.0;
  for (std::int64_t k = 0; k < 5000; ++k)
    sumsq += res.final_state.x(0, k) * res.final_state.x(0, k);
  const double var = sumsq / 5000.0 - m * m;
  CHECK(std::abs(m) < 0.04);
  CHECK(std::abs(var - 0.5) < 0.035);
}

TEST_CASE("repeat runs and thread counts give byte-identical output") {
  const auto m = cli::example1(0.5);
  SimConfig cfg = quick_cfg(1e-3, 0.2, 500);
  const auto init = model::init_uniform1d(-1.0, 1.0, 0);
  const auto r1 = simulate(m.spec, &m.lyap, init, cfg);
  const auto r2 = simulate(m.spec, &m.lyap, init, cfg);
  CHECK(r1.series.to_csv() == r2.series.to_csv());
  cfg.threads = 4;
  const auto r4 = simulate(m.spec, &m.lyap, init, cfg);
  CHECK(r1.series.to_csv() == r4.series.to_csv());
  cfg.threads = 1;
  cfg.trunc = 1e6;
  const auto rt = simulate(m.spec, &m.lyap, init, cfg);
  CHECK(r1.series.to_csv() == rt.series.to_csv());
}

TEST_CASE("recording follows the stride and always includes the endpoint") {
  const auto spec = linear_model(-1.0, 0.0, 1.0);
  SimConfig cfg = quick_cfg(0.01, 0.1, 16);
  cfg.record_stride = 3;
  const auto res = simulate(spec, nullptr, model::init_point1d(0.0, 0), cfg);
  // steps 0, 3, 6, 9, 10
  REQUIRE(res.series.rows.size() == 5);
  CHECK(res.series.rows.front()[0] == 0.0);
  CHECK(res.series.rows.back()[0] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("divergent trajectories raise clear errors") {
  auto spec = linear_model(0.0, 0.0, 0.0);
  spec.drift = [](double, const Vec& x, const model::MeasureStats&, int) {
    return Vec::Constant(1, x[0] * x[0] * x[0]);
  };
  SimConfig cfg = quick_cfg(0.5, 50.0, 4);
  // the cubic overflows inside the coefficient itself
  CHECK_THROWS_WITH_AS(
      (void)simulate(spec, nullptr, model::init_point1d(3.0, 0), cfg),
      doctest::Contains("not finite"), SimError);

  // a finite but enormous drift overflows the position update instead
  spec.drift = [](double, const Vec&, const model::MeasureStats&, int) {
    return Vec::Constant(1, 1e307);
  };
  SimConfig add = quick_cfg(1.0, 30.0, 4);
  CHECK_THROWS_WITH_AS(
      (void)simulate(spec, nullptr, model::init_point1d(0.0, 0), add),
      doctest::Contains("blow-up"), SimError);
}

TEST_CASE("first exit from the truncation ball is recorded") {
  const auto spec = linear_model(1.0, 0.0, 0.0);  // deterministic growth
  SimConfig cfg = quick_cfg(0.01, 1.0, 4);
  cfg.trunc = 1.5;
  const auto res = simulate(spec, nullptr, model::init_point1d(1.0, 0), cfg);
  CHECK(std::isfinite(res.first_exit));
  // e^t crosses 1.5 near t = 0.405
  CHECK(res.first_exit > 0.3);
  CHECK(res.first_exit < 0.5);
  cfg.trunc = 0.0;
  const auto res2 = simulate(spec, nullptr, model::init_point1d(1.0, 0), cfg);
  CHECK(std::isnan(res2.first_exit));
}

TEST_CASE("halving the step moves a moment by at most noise plus order dt") {
  const auto m = cli::example1(0.5);
  const auto init = model::init_uniform1d(-1.0, 1.0, 0);
  SimConfig coarse = quick_cfg(2e-3, 1.0, 2000);
  SimConfig fine = quick_cfg(1e-3, 1.0, 2000);
  const auto rc = simulate(m.spec, &m.lyap, init, coarse);
  const auto rf = simulate(m.spec, &m.lyap, init, fine);
  const int c = rc.series.col("moment_x2");
  const int sc = rc.series.col("se_moment_x2");
  const double vc = rc.series.rows.back()[c];
  const double vf = rf.series.rows.back()[rf.series.col("moment_x2")];
  const double se_c = rc.series.rows.back()[sc];
  const double se_f = rf.series.rows.back()[rf.series.col("se_moment_x2")];
  CHECK(std::abs(vc - vf) <= 2.0 * (se_c + se_f) + 2.0 * coarse.dt);
}

TEST_CASE("occupancy fractions sum to one and EV matches the moment") {
  const auto m = cli::example1(0.5);
  SimConfig cfg = quick_cfg(1e-3, 0.3, 400);
  const auto res = simulate(m.spec, &m.lyap, model::init_uniform1d(-1, 1, 0),
                            cfg);
  const int o1 = res.series.col("regime_occupancy_1");
  const int o2 = res.series.col("regime_occupancy_2");
  const int x2 = res.series.col("moment_x2");
  const int ev = res.series.col("EV");
  for (const auto& row : res.series.rows) {
    CHECK(row[o1] + row[o2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row[x2] == row[ev]);  // V = |x|^2 in both regimes
  }
}

TEST_CASE("equal initial samplers keep a synchronous pair glued") {
  const auto m = cli::example1(0.5);
  SimConfig cfg = quick_cfg(1e-3, 0.2, 300);
  const auto init = model::init_uniform1d(-1.0, 1.0, 0);
  const auto res = synchronous_pair_simulate(m.spec, m.lyap, init, init, cfg);
  CHECK((res.final_x.x - res.final_y.x).norm() == 0.0);
  const int dv = res.series.col("pair_EVdiff");
  const int ag = res.series.col("pair_agree");
  const int pc = res.series.col("pair_cost");
  for (const auto& row : res.series.rows) {
    CHECK(row[dv] == 0.0);
    CHECK(row[ag] == 1.0);
    CHECK(row[pc] == 0.0);
  }
}

TEST_CASE("distinct starts contract under the synchronous coupling") {
  auto m = cli::example1(0.5);
  cli::freeze_regime(m.spec);
  SimConfig cfg = quick_cfg(1e-3, 1.0, 300);
  const auto res = synchronous_pair_simulate(
      m.spec, m.lyap, model::init_point1d(2.0, 0),
      model::init_point1d(-2.0, 0), cfg);
  const int dv = res.series.col("pair_EVdiff");
  CHECK(res.series.rows.front()[dv] == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(res.series.rows.back()[dv] <
        0.5 * res.series.rows.front()[dv]);
}

TEST_CASE("law iteration is exactly stable without mean-field feedback") {
  const auto spec = linear_model(-1.0, 0.5, 0.2);
  SimConfig cfg = quick_cfg(1e-3, 0.1, 200);
  const auto res =
      picard_law_iteration(spec, model::init_uniform1d(0.0, 2.0, 0), cfg, 3);
  REQUIRE(res.distances.size() == 3);
  CHECK(res.distances[0] > 0.0);
  CHECK(res.distances[1] == 0.0);
  CHECK(res.distances[2] == 0.0);
}

TEST_CASE("law iteration contracts for the mean-field builtin") {
  const auto m = cli::example1(0.5);
  SimConfig cfg = quick_cfg(1e-3, 0.25, 400);
  const auto res = picard_law_iteration(
      m.spec, model::init_uniform1d(0.0, 2.0, 0), cfg, 3);
  REQUIRE(res.distances.size() == 3);
  CHECK(res.distances[1] < res.distances[0]);
  CHECK(res.distances[2] < res.distances[1]);
}

TEST_CASE("time series round-trips through csv") {
  TimeSeries ts;
  ts.columns = {"t", "a"};
  Vec r1(2), r2(2);
  r1 << 0.0, 1.0 / 3.0;
  r2 << 0.1, -2.5e-17;
  ts.add_row(r1);
  ts.add_row(r2);
  const std::string path = "ts_roundtrip_test.csv";
  ts.write_csv(path);
  const auto back = TimeSeries::read_csv(path);
  CHECK(back.to_csv() == ts.to_csv());
  CHECK(back.rows[0][1] == 1.0 / 3.0);
  CHECK(back.rows[1][1] == -2.5e-17);
  std::remove(path.c_str());
}

TEST_CASE("row lookup by time") {
  TimeSeries ts;
  ts.columns = {"t", "a"};
  for (int k = 0; k <= 10; ++k) {
    Vec r(2);
    r << 0.1 * k, static_cast<double>(k);
    ts.add_row(r);
  }
  CHECK(ts.rows[ts.row_at_time(0.5, 0.01)][1] == 5.0);
  CHECK(ts.rows[ts.row_at_time(0.54, 0.05)][1] == 5.0);
  CHECK_THROWS_WITH_AS((void)ts.row_at_time(0.54, 0.01),
                       doctest::Contains("no recorded row"), SimError);
}

TEST_CASE("config validation rejects broken setups") {
  SimConfig cfg;
  cfg.dt = 0.0;
  CHECK_THROWS_AS(cfg.validate(), SimError);
  cfg = SimConfig{};
  cfg.particles = 0;
  CHECK_THROWS_AS(cfg.validate(), SimError);
  cfg = SimConfig{};
  cfg.T = -1.0;
  CHECK_THROWS_AS(cfg.validate(), SimError);
  cfg = SimConfig{};
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.steps() == 1000);
}

TEST_CASE("first-order pair stepping rejects oversized steps at setup") {
  const auto m = cli::example2();
  SimConfig cfg = quick_cfg(0.2, 0.4, 16);
  cfg.mode = switching::SwitchMode::FirstOrder;
  // coupled bound 2(m-1) * bound on m^2 - 1 states exceeds the budget
  CHECK_THROWS_WITH_AS(
      (void)synchronous_pair_simulate(m.spec, m.lyap,
                                      model::init_point1d(1.0, 0),
                                      model::init_point1d(-1.0, 1), cfg),
      doctest::Contains("first-order"), SimError);
}
