#include "mvx/particle.hpp"

#include "mvx/measures.hpp"

#include <algorithm>
#include <tuple>

namespace mvx::particle {

namespace {

using switching::SwitchMode;

struct Tags {
  StreamTag brownian, regime, init;
};

Tags tags_for(int ensemble) {
  if (ensemble == 0)
    return {StreamTag::Brownian, StreamTag::Regime, StreamTag::Init};
  return {StreamTag::BrownianB, StreamTag::RegimeB, StreamTag::InitB};
}

void check_mode_setup(const model::ModelSpec& spec, const SimConfig& cfg,
                      bool paired) {
  if (cfg.mode != SwitchMode::FirstOrder) return;
  const int m = spec.regimes;
  double worst = cfg.dt * spec.q.bound * (m - 1);
  if (paired)
    worst = cfg.dt * switching::coupled_bound(spec.q.bound, m) * (m * m - 1);
  if (worst > 0.5)
    throw SimError("first-order switching needs the per-step jump "
                   "probability bounded by 1/2; got " + fmt6(worst) +
                   " (reduce dt or use thinning)");
}

model::MeasureStats coefficient_stats(const model::ModelSpec& spec,
                                      const Mat& x, double trunc) {
  return trunc > 0.0
             ? model::compute_stats_truncated(spec.functionals, x, trunc)
             : model::compute_stats(spec.functionals, x);
}

/// Advances one ensemble by one step. Positions integrate the coefficients
/// at the (possibly truncated) pre-step state under the frozen `stats`;
/// regimes step from the raw pre-step position. Writes go to the buffers,
/// which are then swapped in.
void step_ensemble(ParticleEnsemble& ens, const model::ModelSpec& spec,
                   const SimConfig& cfg, const Tags& tg,
                   const model::MeasureStats& stats, Mat& xbuf,
                   std::vector<int>& rbuf) {
  const double sqdt = std::sqrt(cfg.dt);
  std::optional<Mat> const_q;
  if (!spec.q.x_dependent) const_q = spec.q.evaluate(Vec());

  parallel_for_chunks(
      ens.size(), cfg.threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t k = lo; k < hi; ++k) {
          RngStream gb(ens.seed, static_cast<std::uint32_t>(k), ens.step,
                       tg.brownian);
          const Vec xi = gb.normal_vec(spec.brownian_dim);
          const Vec xk = ens.x.col(k);
          const int ik = ens.regime[static_cast<std::size_t>(k)];
          const Vec xe = cfg.trunc > 0.0 ? truncate(xk, cfg.trunc) : xk;
          auto [b, s] =
              model::evaluate_drift_diffusion(spec, ens.t, xe, stats, ik);
          Vec xn = xk + b * cfg.dt + s * (sqdt * xi);
          if (!xn.allFinite())
            throw SimError("particle " + std::to_string(k + 1) +
                           " became non-finite at t = " + fmt6(ens.t + cfg.dt) +
                           " (blow-up; consider truncation or smaller dt)");
          xbuf.col(k) = xn;
          RngStream gr(ens.seed, static_cast<std::uint32_t>(k), ens.step,
                       tg.regime);
          rbuf[static_cast<std::size_t>(k)] =
              const_q ? switching::step_regime_matrix(*const_q, spec.q.bound,
                                                      ik, cfg.dt, cfg.mode, gr)
                      : switching::step_regime(spec.q, xk, ik, cfg.dt,
                                               cfg.mode, gr);
        }
      });
  ens.x.swap(xbuf);
  std::swap(ens.regime, rbuf);
  ens.t += cfg.dt;
  ens.step += 1;
}

std::vector<std::string> series_columns(const model::ModelSpec& spec,
                                        bool with_lyap, bool paired) {
  std::vector<std::string> cols = {"t"};
  for (int i = 1; i <= spec.regimes; ++i)
    cols.push_back("regime_occupancy_" + std::to_string(i));
  for (const auto& f : spec.functionals) cols.push_back("moment_" + f.name);
  if (with_lyap) {
    cols.push_back("EV");
    cols.push_back("Ephi");
  }
  if (paired) {
    cols.push_back("pair_EVdiff");
    cols.push_back("pair_agree");
    cols.push_back("pair_cost");
  }
  for (const auto& f : spec.functionals) cols.push_back("se_moment_" + f.name);
  if (with_lyap) {
    cols.push_back("se_EV");
    cols.push_back("se_Ephi");
  }
  if (paired) {
    cols.push_back("se_pair_EVdiff");
    cols.push_back("se_pair_cost");
  }
  return cols;
}

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

MeanSe mean_se(double sum, double sumsq, std::int64_t n) {
  MeanSe r;
  r.mean = sum / static_cast<double>(n);
  const double var =
      std::max(0.0, sumsq / static_cast<double>(n) - r.mean * r.mean);
  r.se = std::sqrt(var / static_cast<double>(n));
  return r;
}

/// Occupancy, declared moments, EV and Ephi of one ensemble, with standard
/// errors; serial reduction in particle order.
void single_values(const ParticleEnsemble& ens, const model::ModelSpec& spec,
                   const model::LyapunovSpec* lyap, std::vector<double>& main,
                   std::vector<double>& se) {
  const std::int64_t n = ens.size();
  main.clear();
  se.clear();
  std::vector<double> occ(static_cast<std::size_t>(spec.regimes), 0.0);
  for (int r : ens.regime) occ[static_cast<std::size_t>(r)] += 1.0;
  for (double o : occ) main.push_back(o / static_cast<double>(n));

  for (const auto& f : spec.functionals) {
    double sum = 0.0, sumsq = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
      const double v = f.f(ens.x.col(k));
      sum += v;
      sumsq += v * v;
    }
    const MeanSe ms = mean_se(sum, sumsq, n);
    main.push_back(ms.mean);
    se.push_back(ms.se);
  }

  if (lyap) {
    double sv = 0.0, svv = 0.0, sp = 0.0, spp = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
      const double v =
          lyap->v(ens.regime[static_cast<std::size_t>(k)]).value(ens.x.col(k));
      const double p = lyap->phi(ens.x.col(k));
      sv += v;
      svv += v * v;
      sp += p;
      spp += p * p;
    }
    const MeanSe mv = mean_se(sv, svv, n);
    const MeanSe mp = mean_se(sp, spp, n);
    main.push_back(mv.mean);
    main.push_back(mp.mean);
    se.push_back(mv.se);
    se.push_back(mp.se);
  }
}

Vec assemble_row(double t, const std::vector<double>& main,
                 const std::vector<double>& se) {
  Vec row(1 + static_cast<std::int64_t>(main.size() + se.size()));
  row[0] = t;
  std::int64_t k = 1;
  for (double v : main) row[k++] = v;
  for (double v : se) row[k++] = v;
  return row;
}

bool any_outside(const ParticleEnsemble& ens, double radius) {
  for (std::int64_t k = 0; k < ens.size(); ++k)
    if (ens.x.col(k).norm() > radius) return true;
  return false;
}

}  // namespace

ParticleEnsemble init_ensemble(const model::ModelSpec& spec,
                               const model::InitSampler& init,
                               const SimConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (!init.position || !init.regime)
    throw SimError("init sampler is missing a position or regime callback");
  const Tags tg = tags_for(cfg.ensemble);
  ParticleEnsemble ens;
  ens.seed = cfg.seed;
  ens.x.resize(spec.dim, cfg.particles);
  ens.regime.resize(static_cast<std::size_t>(cfg.particles));
  for (std::int64_t k = 0; k < cfg.particles; ++k) {
    RngStream gi(cfg.seed, static_cast<std::uint32_t>(k), 0, tg.init);
    const Vec x0 = init.position(gi);
    if (x0.size() != spec.dim)
      throw SimError("init sampler produced dimension " +
                     std::to_string(x0.size()) + ", model needs " +
                     std::to_string(spec.dim));
    if (!x0.allFinite())
      throw SimError("init sampler produced a non-finite position");
    const int r0 = init.regime(gi);
    if (r0 < 0 || r0 >= spec.regimes)
      throw SimError("init sampler produced regime " + std::to_string(r0 + 1) +
                     " outside 1.." + std::to_string(spec.regimes));
    ens.x.col(k) = x0;
    ens.regime[static_cast<std::size_t>(k)] = r0;
  }
  return ens;
}

void advance(ParticleEnsemble& ens, const model::ModelSpec& spec,
             const SimConfig& cfg) {
  const Tags tg = tags_for(cfg.ensemble);
  const model::MeasureStats stats =
      coefficient_stats(spec, ens.x, cfg.trunc);
  Mat xbuf(ens.x.rows(), ens.x.cols());
  std::vector<int> rbuf(ens.regime.size());
  step_ensemble(ens, spec, cfg, tg, stats, xbuf, rbuf);
}

ParticleEnsemble euler_step(const ParticleEnsemble& ens,
                            const model::ModelSpec& spec, double dt,
                            switching::SwitchMode mode) {
  SimConfig cfg;
  cfg.dt = dt;
  cfg.T = dt;
  cfg.particles = std::max<std::int64_t>(1, ens.size());
  cfg.seed = ens.seed;
  cfg.mode = mode;
  check_mode_setup(spec, cfg, false);
  ParticleEnsemble out = ens;
  advance(out, spec, cfg);
  return out;
}

SimResult simulate(
    const model::ModelSpec& spec, const model::LyapunovSpec* lyap,
    const model::InitSampler& init, const SimConfig& cfg,
    const std::function<void(const ParticleEnsemble&)>& on_record) {
  spec.validate();
  cfg.validate();
  check_mode_setup(spec, cfg, false);
  const Tags tg = tags_for(cfg.ensemble);
  const std::int64_t nsteps = cfg.steps();

  SimResult res;
  ParticleEnsemble ens = init_ensemble(spec, init, cfg);
  res.series.columns = series_columns(spec, lyap != nullptr, false);

  Mat xbuf(spec.dim, cfg.particles);
  std::vector<int> rbuf(static_cast<std::size_t>(cfg.particles));
  std::vector<double> main, se;

  auto note_exit = [&] {
    if (cfg.trunc > 0.0 && std::isnan(res.first_exit) &&
        any_outside(ens, cfg.trunc))
      res.first_exit = ens.t;
  };
  auto record = [&] {
    single_values(ens, spec, lyap, main, se);
    res.series.add_row(assemble_row(ens.t, main, se));
    if (on_record) on_record(ens);
  };

  note_exit();
  record();
  for (std::int64_t s = 1; s <= nsteps; ++s) {
    const model::MeasureStats stats =
        coefficient_stats(spec, ens.x, cfg.trunc);
    step_ensemble(ens, spec, cfg, tg, stats, xbuf, rbuf);
    note_exit();
    if (s % cfg.record_stride == 0 || s == nsteps) record();
  }
  res.final_state = std::move(ens);
  return res;
}

PairResult synchronous_pair_simulate(
    const model::ModelSpec& spec, const model::LyapunovSpec& lyap,
    const model::InitSampler& init1, const model::InitSampler& init2,
    const SimConfig& cfg,
    const std::function<void(const ParticleEnsemble&, const ParticleEnsemble&)>&
        on_record) {
  spec.validate();
  cfg.validate();
  check_mode_setup(spec, cfg, true);
  if (!lyap.Vtilde.value || !lyap.Vhat.value)
    throw SimError("paired simulation needs the coupled Lyapunov costs");
  const std::int64_t nsteps = cfg.steps();

  // Both sides replay the same init stream so equal samplers give equal
  // starting states; the pairing is the comonotone one.
  SimConfig icfg = cfg;
  PairResult res;
  ParticleEnsemble ex = init_ensemble(spec, init1, icfg);
  ParticleEnsemble ey = init_ensemble(spec, init2, icfg);

  res.series.columns = series_columns(spec, true, true);

  const std::int64_t n = cfg.particles;
  Mat xbx(spec.dim, n), xby(spec.dim, n);
  std::vector<int> rbx(static_cast<std::size_t>(n)),
      rby(static_cast<std::size_t>(n));
  std::optional<Mat> const_q;
  if (!spec.q.x_dependent) const_q = spec.q.evaluate(Vec());
  const double sqdt = std::sqrt(cfg.dt);

  std::vector<double> main, se;
  auto record = [&] {
    single_values(ex, spec, &lyap, main, se);
    double sd = 0.0, sdd = 0.0, agree = 0.0, sc = 0.0, scc = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
      const Vec diff = ex.x.col(k) - ey.x.col(k);
      const bool eq = ex.regime[static_cast<std::size_t>(k)] ==
                      ey.regime[static_cast<std::size_t>(k)];
      const double vd = lyap.Vtilde.value(diff);
      const double cost = std::sqrt((eq ? 0.0 : 1.0) + lyap.Vhat.value(diff));
      sd += vd;
      sdd += vd * vd;
      agree += eq ? 1.0 : 0.0;
      sc += cost;
      scc += cost * cost;
    }
    const MeanSe md = mean_se(sd, sdd, n);
    const MeanSe mc = mean_se(sc, scc, n);
    main.push_back(md.mean);
    main.push_back(agree / static_cast<double>(n));
    main.push_back(mc.mean);
    se.push_back(md.se);
    se.push_back(mc.se);
    res.series.add_row(assemble_row(ex.t, main, se));
    if (on_record) on_record(ex, ey);
  };
  auto note_exit = [&] {
    if (cfg.trunc > 0.0 && std::isnan(res.first_exit) &&
        (any_outside(ex, cfg.trunc) || any_outside(ey, cfg.trunc)))
      res.first_exit = ex.t;
  };

  note_exit();
  record();
  for (std::int64_t s = 1; s <= nsteps; ++s) {
    const model::MeasureStats stats_x =
        coefficient_stats(spec, ex.x, cfg.trunc);
    const model::MeasureStats stats_y =
        coefficient_stats(spec, ey.x, cfg.trunc);
    parallel_for_chunks(
        n, cfg.threads, [&](std::int64_t lo, std::int64_t hi) {
          for (std::int64_t k = lo; k < hi; ++k) {
            RngStream gb(cfg.seed, static_cast<std::uint32_t>(k), ex.step,
                         StreamTag::Brownian);
            const Vec xi = gb.normal_vec(spec.brownian_dim);
            const Vec xk = ex.x.col(k);
            const Vec yk = ey.x.col(k);
            const int ik = ex.regime[static_cast<std::size_t>(k)];
            const int jk = ey.regime[static_cast<std::size_t>(k)];
            const Vec xe = cfg.trunc > 0.0 ? truncate(xk, cfg.trunc) : xk;
            const Vec ye = cfg.trunc > 0.0 ? truncate(yk, cfg.trunc) : yk;
            auto [bx, sx] =
                model::evaluate_drift_diffusion(spec, ex.t, xe, stats_x, ik);
            auto [by, sy] =
                model::evaluate_drift_diffusion(spec, ey.t, ye, stats_y, jk);
            Vec xn = xk + bx * cfg.dt + sx * (sqdt * xi);
            Vec yn = yk + by * cfg.dt + sy * (sqdt * xi);
            if (!xn.allFinite() || !yn.allFinite())
              throw SimError("paired particle " + std::to_string(k + 1) +
                             " became non-finite at t = " +
                             fmt6(ex.t + cfg.dt) + " (blow-up)");
            xbx.col(k) = xn;
            xby.col(k) = yn;
            RngStream gr(cfg.seed, static_cast<std::uint32_t>(k), ex.step,
                         StreamTag::Regime);
            std::pair<int, int> nr;
            if (const_q) {
              if (ik == jk) {
                const int ni = switching::step_regime_matrix(
                    *const_q, spec.q.bound, ik, cfg.dt, cfg.mode, gr);
                nr = {ni, ni};
              } else {
                nr.first = switching::step_regime_matrix(
                    *const_q, spec.q.bound, ik, cfg.dt, cfg.mode, gr);
                nr.second = switching::step_regime_matrix(
                    *const_q, spec.q.bound, jk, cfg.dt, cfg.mode, gr);
              }
            } else {
              nr = switching::step_pair_basic(spec.q, xk, yk, ik, jk, cfg.dt,
                                              cfg.mode, gr);
            }
            rbx[static_cast<std::size_t>(k)] = nr.first;
            rby[static_cast<std::size_t>(k)] = nr.second;
          }
        });
    ex.x.swap(xbx);
    ey.x.swap(xby);
    std::swap(ex.regime, rbx);
    std::swap(ey.regime, rby);
    ex.t += cfg.dt;
    ey.t = ex.t;
    ex.step += 1;
    ey.step = ex.step;
    note_exit();
    if (s % cfg.record_stride == 0 || s == nsteps) record();
  }
  res.final_x = std::move(ex);
  res.final_y = std::move(ey);
  return res;
}

PicardResult picard_law_iteration(const model::ModelSpec& spec,
                                  const model::InitSampler& init,
                                  const SimConfig& cfg, int rounds) {
  spec.validate();
  cfg.validate();
  check_mode_setup(spec, cfg, false);
  if (rounds < 1) throw SimError("picard iteration needs rounds >= 1");
  const Tags tg = tags_for(cfg.ensemble);
  const std::int64_t nsteps = cfg.steps();

  std::vector<std::string> names;
  for (const auto& f : spec.functionals) names.push_back(f.name);

  auto stats_values = [&](const Mat& x) {
    return coefficient_stats(spec, x, cfg.trunc).values();
  };
  auto is_grid = [&](std::int64_t s) {
    return s % cfg.record_stride == 0 || s == nsteps;
  };

  const ParticleEnsemble ens0 = init_ensemble(spec, init, cfg);

  // Round 0: the law flow frozen at the initial empirical law.
  std::vector<Vec> prev_flow(static_cast<std::size_t>(nsteps) + 1,
                             stats_values(ens0.x));
  std::vector<Mat> prev_snaps;
  for (std::int64_t s = 0; s <= nsteps; ++s)
    if (is_grid(s)) prev_snaps.push_back(ens0.x);

  auto flow_distance = [&](const Mat& a, const Mat& b) {
    namespace ms = measures;
    if (spec.dim == 1)
      return ms::wasserstein_1d(ms::EmpiricalMeasure::from_points(a),
                                ms::EmpiricalMeasure::from_points(b), 2);
    ms::OtOptions opts;
    opts.subsample_seed = cfg.seed;
    return ms::ot_cost(ms::EmpiricalMeasure::from_points(a),
                       ms::EmpiricalMeasure::from_points(b),
                       ms::GroundCost::euclidean(2), opts)
        .value;
  };

  PicardResult res;
  Mat xbuf(spec.dim, cfg.particles);
  std::vector<int> rbuf(static_cast<std::size_t>(cfg.particles));
  for (int r = 1; r <= rounds; ++r) {
    ParticleEnsemble ens = init_ensemble(spec, init, cfg);
    std::vector<Vec> cur_flow;
    cur_flow.reserve(static_cast<std::size_t>(nsteps) + 1);
    std::vector<Mat> cur_snaps;
    cur_flow.push_back(stats_values(ens.x));
    if (is_grid(0)) cur_snaps.push_back(ens.x);
    for (std::int64_t s = 1; s <= nsteps; ++s) {
      const model::MeasureStats frozen(
          names, prev_flow[static_cast<std::size_t>(s) - 1]);
      step_ensemble(ens, spec, cfg, tg, frozen, xbuf, rbuf);
      cur_flow.push_back(stats_values(ens.x));
      if (is_grid(s)) cur_snaps.push_back(ens.x);
    }
    double dist = 0.0;
    for (std::size_t j = 0; j < cur_snaps.size(); ++j)
      dist = std::max(dist, flow_distance(prev_snaps[j], cur_snaps[j]));
    res.distances.push_back(dist);
    prev_flow = std::move(cur_flow);
    prev_snaps = std::move(cur_snaps);
  }
  return res;
}

}  // namespace mvx::particle
