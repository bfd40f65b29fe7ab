#include "mvx/experiments.hpp"

#include "mvx/fit.hpp"
#include "mvx/lyapunov.hpp"
#include "mvx/particle.hpp"
#include "mvx/switching.hpp"

#include <cstdio>
#include <fstream>

namespace mvx::cli {

namespace {

Vec broadcast(const Vec& v, int dim, const std::string& what) {
  if (v.size() == dim) return v;
  if (v.size() == 1) return Vec::Constant(dim, v[0]);
  throw SimError(what + " needs 1 or " + std::to_string(dim) +
                 " numbers, got " + std::to_string(v.size()));
}

model::InitSampler make_sampler(const InitSpec& init,
                                const model::ModelSpec& spec,
                                const std::string& what) {
  if (init.regime < 0 || init.regime >= spec.regimes)
    throw SimError(what + " regime label " + std::to_string(init.regime + 1) +
                   " outside 1.." + std::to_string(spec.regimes));
  const Vec a = broadcast(init.a, spec.dim, what);
  switch (init.kind) {
    case InitSpec::Kind::Point:
      return model::init_point(a, init.regime);
    case InitSpec::Kind::Uniform:
      return model::init_uniform(a, broadcast(init.b, spec.dim, what),
                                 init.regime);
    case InitSpec::Kind::Gaussian:
      return model::init_gaussian(a, broadcast(init.b, spec.dim, what),
                                  init.regime);
  }
  throw SimError(what + " has no kind");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SimError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw SimError("failed writing " + path);
}

SlopeFit fit_series(const particle::TimeSeries& s, const std::string& colname,
                    double tmin, double tmax) {
  const auto t = s.column("t");
  const auto y = s.column(colname);
  std::vector<double> se;
  if (s.has_col("se_" + colname)) se = s.column("se_" + colname);
  return fit_log_slope(t, y, se, tmin, tmax);
}

measures::GroundCost metric_cost(const std::string& metric,
                                 const model::LyapunovSpec& lyap) {
  if (metric == "w1") return measures::GroundCost::euclidean(1);
  if (metric == "w2") return measures::GroundCost::euclidean(2);
  if (metric == "wvtilde")
    return measures::GroundCost::lyapunov(lyap.Vtilde.value);
  return measures::GroundCost::product(lyap.Vhat.value);
}

measures::EmpiricalMeasure measure_of(const particle::ParticleEnsemble& ens) {
  return measures::EmpiricalMeasure::from_points(ens.x, ens.regime);
}

struct Checks {
  bool all = true;

  void line(bool ok, const std::string& what) {
    std::printf("%s %s\n", ok ? "[PASS]" : "[FAIL]", what.c_str());
    all = all && ok;
  }
};

void report_fit(const SlopeFit& fit, const ExperimentConfig& cfg,
                const std::string& col) {
  if (fit.ok)
    std::printf("slope of %s over [%s, %s]: %s (95%% CI +- %s, %d points)\n",
                col.c_str(), fmt6(cfg.fit_tmin).c_str(),
                fmt6(cfg.fit_tmax).c_str(), fmt6(fit.slope).c_str(),
                fmt6(fit.ci_half).c_str(), fit.used);
  else
    std::printf("slope of %s: not enough usable points (%d)\n", col.c_str(),
                fit.used);
}

void check_slope(Checks& ck, const SlopeFit& fit, double target) {
  ck.line(fit.ok && fit.slope <= target,
          "fitted slope " + fmt6(fit.ok ? fit.slope : 0.0) +
              " <= " + fmt6(target));
}

void check_bounds(Checks& ck, const particle::TimeSeries& ts,
                  const ExperimentConfig& cfg, double rate) {
  if (!cfg.assert_bound_factor || cfg.assert_bound_times.empty()) return;
  const int c = ts.col(cfg.bound_column);
  const double t0 = ts.rows.front()[ts.col("t")];
  const double v0 = ts.rows.front()[c];
  for (double t : cfg.assert_bound_times) {
    const auto k = ts.row_at_time(t, cfg.sim.dt);
    const double v = ts.rows[k][c];
    const double bound =
        std::exp(rate * (t - t0)) * v0 * (*cfg.assert_bound_factor);
    ck.line(v <= bound, cfg.bound_column + " at t = " + fmt6(t) + ": " +
                            fmt6(v) + " <= " + fmt6(bound) + " (factor " +
                            fmt6(*cfg.assert_bound_factor) + ")");
  }
}

void note_exit(double first_exit) {
  if (!std::isnan(first_exit))
    std::printf("note: first truncation exit at t = %s\n",
                fmt6(first_exit).c_str());
}

void run_moment(const ExperimentConfig& cfg, const Builtin& m, Checks& ck) {
  const auto sampler = make_sampler(cfg.init, m.spec, "init");
  const auto res = particle::simulate(m.spec, &m.lyap, sampler, cfg.sim);
  res.series.write_csv(cfg.out_path);
  std::printf("wrote %s\n", cfg.out_path.c_str());
  if (!cfg.snapshot_path.empty()) {
    write_snapshot(cfg.snapshot_path, res.final_state);
    std::printf("wrote %s\n", cfg.snapshot_path.c_str());
  }
  note_exit(res.first_exit);

  const SlopeFit fit =
      fit_series(res.series, cfg.fit_column, cfg.fit_tmin, cfg.fit_tmax);
  report_fit(fit, cfg, cfg.fit_column);
  if (cfg.assert_slope_max) check_slope(ck, fit, *cfg.assert_slope_max);
  check_bounds(ck, res.series, cfg, m.lyap.lambda1 + m.lyap.lambda2);
}

void run_pair(const ExperimentConfig& cfg, const Builtin& m, Checks& ck) {
  const auto s1 = make_sampler(cfg.init, m.spec, "init");
  const auto s2 = make_sampler(cfg.init2, m.spec, "init2");
  const auto res =
      particle::synchronous_pair_simulate(m.spec, m.lyap, s1, s2, cfg.sim);
  res.series.write_csv(cfg.out_path);
  std::printf("wrote %s\n", cfg.out_path.c_str());
  if (!cfg.snapshot_path.empty()) {
    write_snapshot(cfg.snapshot_path, res.final_x);
    write_snapshot(cfg.snapshot_path + ".b", res.final_y);
    std::printf("wrote %s and %s.b\n", cfg.snapshot_path.c_str(),
                cfg.snapshot_path.c_str());
  }
  note_exit(res.first_exit);

  const SlopeFit fit =
      fit_series(res.series, cfg.fit_column, cfg.fit_tmin, cfg.fit_tmax);
  report_fit(fit, cfg, cfg.fit_column);

  double slope_target = 0.0;
  bool have_target = false;
  if (cfg.assert_slope_max) {
    slope_target = *cfg.assert_slope_max;
    have_target = true;
  } else if (cfg.kind == "contraction-switching") {
    // Conservative decay rate: a quarter of the slower of the coupled-cost
    // rate and the chains' meeting rate, with slack 0.1.
    if (m.spec.q.x_dependent)
      throw SimError(
          "contraction-switching needs a constant generator; set q");
    const double theta_c = switching::meeting_rate(m.spec.q.evaluate(Vec()));
    const double tilde = 0.25 * std::min(m.lyap.theta, theta_c);
    slope_target = -tilde + 0.1;
    have_target = true;
    std::printf("meeting rate %s, coupled rate %s, slope target %s\n",
                fmt6(theta_c).c_str(), fmt6(m.lyap.theta).c_str(),
                fmt6(slope_target).c_str());
  }
  if (have_target) check_slope(ck, fit, slope_target);
  if (cfg.assert_ci_excludes_zero)
    ck.line(fit.ok && fit.slope + fit.ci_half < 0.0,
            "slope CI excludes zero: " + fmt6(fit.slope) + " + " +
                fmt6(fit.ci_half) + " < 0");
  if (cfg.assert_agreement_min) {
    const auto k = res.series.row_at_time(cfg.agreement_time, cfg.sim.dt);
    const double agree = res.series.rows[k][res.series.col("pair_agree")];
    ck.line(agree >= *cfg.assert_agreement_min,
            "regime agreement at t = " + fmt6(cfg.agreement_time) + ": " +
                fmt6(agree) + " >= " + fmt6(*cfg.assert_agreement_min));
  }
}

void run_picard(const ExperimentConfig& cfg, const Builtin& m, Checks& ck) {
  const auto sampler = make_sampler(cfg.init, m.spec, "init");
  const auto res =
      particle::picard_law_iteration(m.spec, sampler, cfg.sim, cfg.rounds);
  particle::TimeSeries ts;
  ts.columns = {"round", "w2"};
  std::string listing;
  for (std::size_t r = 0; r < res.distances.size(); ++r) {
    Vec row(2);
    row[0] = static_cast<double>(r + 1);
    row[1] = res.distances[r];
    ts.add_row(row);
    if (r) listing += ", ";
    listing += fmt6(res.distances[r]);
  }
  ts.write_csv(cfg.out_path);
  std::printf("wrote %s\n", cfg.out_path.c_str());
  std::printf("law-flow distances: %s\n", listing.c_str());
  if (cfg.assert_decreasing) {
    bool dec = true;
    for (std::size_t r = 1; r < res.distances.size(); ++r)
      dec = dec && res.distances[r] < res.distances[r - 1];
    ck.line(dec && res.distances.size() > 1,
            "distances strictly decreasing: " + listing);
  }
}

void run_invariant(const ExperimentConfig& cfg, const Builtin& m, Checks& ck) {
  const auto s1 = make_sampler(cfg.init, m.spec, "init");
  const auto s2 = make_sampler(cfg.init2, m.spec, "init2");
  particle::SimConfig c1 = cfg.sim;
  particle::SimConfig c2 = cfg.sim;
  c1.ensemble = 0;
  c2.ensemble = 1;
  auto e1 = particle::init_ensemble(m.spec, s1, c1);
  auto e2 = particle::init_ensemble(m.spec, s2, c2);
  const auto ref2 = measure_of(e2);

  measures::OtOptions opts;
  opts.subsample_seed = cfg.sim.seed;
  const auto cost = metric_cost(cfg.metric, m.lyap);
  const auto orbit_cost = measures::GroundCost::lyapunov(m.lyap.Vtilde.value);

  particle::TimeSeries ts;
  ts.columns = {"t", cfg.metric, "wvtilde_orbit"};
  auto record = [&] {
    Vec row(3);
    row[0] = e1.t;
    row[1] = measures::ot_cost(measure_of(e1), measure_of(e2), cost, opts)
                 .value;
    row[2] = measures::ot_cost(measure_of(e2), ref2, orbit_cost, opts).value;
    ts.add_row(row);
  };
  record();
  const std::int64_t nsteps = cfg.sim.steps();
  for (std::int64_t s = 1; s <= nsteps; ++s) {
    particle::advance(e1, m.spec, c1);
    particle::advance(e2, m.spec, c2);
    if (s % cfg.sim.record_stride == 0 || s == nsteps) record();
  }
  ts.write_csv(cfg.out_path);
  std::printf("wrote %s\n", cfg.out_path.c_str());
  if (!cfg.snapshot_path.empty()) {
    write_snapshot(cfg.snapshot_path, e1);
    write_snapshot(cfg.snapshot_path + ".b", e2);
    std::printf("wrote %s and %s.b\n", cfg.snapshot_path.c_str(),
                cfg.snapshot_path.c_str());
  }

  const double d0 = ts.rows.front()[1];
  const double dT = ts.rows.back()[1];
  double orbit_sup = 0.0;
  for (const auto& row : ts.rows) orbit_sup = std::max(orbit_sup, row[2]);
  std::printf("%s between the laws: %s at t = 0, %s at t = %s\n",
              cfg.metric.c_str(), fmt6(d0).c_str(), fmt6(dT).c_str(),
              fmt6(e1.t).c_str());
  std::printf("running sup of W_Vtilde orbit distance: %s\n",
              fmt6(orbit_sup).c_str());
  if (cfg.assert_slope_max) {
    const SlopeFit fit = fit_series(ts, cfg.metric, cfg.fit_tmin, cfg.fit_tmax);
    report_fit(fit, cfg, cfg.metric);
    check_slope(ck, fit, *cfg.assert_slope_max);
  }
  if (cfg.assert_decreasing)
    ck.line(dT < d0, "terminal " + cfg.metric + " " + fmt6(dT) +
                         " below initial " + fmt6(d0));
}

std::vector<lyapunov::PairedCloud> make_couplings(std::uint64_t seed, int dim,
                                                  int regime) {
  const std::int64_t pairs = 64;
  std::vector<lyapunov::PairedCloud> out;
  for (int c = 0; c < 6; ++c) {
    RngStream g(seed, static_cast<std::uint32_t>(7000 + 16 * regime + c), 0,
                StreamTag::Init);
    lyapunov::PairedCloud pc;
    pc.x.resize(dim, pairs);
    pc.y.resize(dim, pairs);
    pc.regimes.assign(static_cast<std::size_t>(pairs), regime);
    for (std::int64_t k = 0; k < pairs; ++k) {
      const Vec gx = g.normal_vec(dim);
      const Vec gy = g.normal_vec(dim);
      switch (c % 3) {
        case 0:  // one cloud shifted against itself
          pc.x.col(k) = 2.0 * gx;
          pc.y.col(k) = 2.0 * gx - Vec::Constant(dim, 1.5);
          break;
        case 1:  // independent clouds of different scales
          pc.x.col(k) = 2.0 * gx;
          pc.y.col(k) = 1.5 * gy;
          break;
        default:  // partially coupled
          pc.x.col(k) = gx;
          pc.y.col(k) = 0.5 * gx + 0.25 * gy;
      }
    }
    out.push_back(std::move(pc));
  }
  return out;
}

}  // namespace

ExperimentConfig resolve(const ExperimentConfig& raw) {
  ExperimentConfig cfg = raw;
  if (cfg.meta_path.empty()) cfg.meta_path = cfg.out_path + ".meta";

  auto set_init = [](InitSpec& init, bool& has, InitSpec::Kind kind, double a,
                     double b, int regime) {
    if (has) return;
    init.kind = kind;
    init.a = Vec::Constant(1, a);
    init.b = Vec::Constant(1, b);
    init.regime = regime;
    has = true;
  };

  if (cfg.kind == "moment-decay") {
    set_init(cfg.init, cfg.has_init, InitSpec::Kind::Uniform, -1.0, 1.0, 0);
    if (cfg.fit_column.empty()) cfg.fit_column = "EV";
  } else if (cfg.kind == "contraction") {
    if (!cfg.freeze_regime && !cfg.q_override) cfg.freeze_regime = 0;
    const int reg = cfg.freeze_regime ? *cfg.freeze_regime : 0;
    set_init(cfg.init, cfg.has_init, InitSpec::Kind::Point, 2.0, 0.0, reg);
    set_init(cfg.init2, cfg.has_init2, InitSpec::Kind::Point, -2.0, 0.0, reg);
    if (cfg.fit_column.empty()) cfg.fit_column = "pair_EVdiff";
  } else if (cfg.kind == "contraction-switching") {
    if (!cfg.q_override && !cfg.freeze_regime) {
      Mat q(2, 2);
      q << -1.0, 1.0, 1.0, -1.0;
      cfg.q_override = q;
    }
    set_init(cfg.init, cfg.has_init, InitSpec::Kind::Point, 1.0, 0.0, 0);
    set_init(cfg.init2, cfg.has_init2, InitSpec::Kind::Point, -1.0, 0.0, 1);
    if (cfg.fit_column.empty()) cfg.fit_column = "pair_cost";
  } else if (cfg.kind == "picard") {
    set_init(cfg.init, cfg.has_init, InitSpec::Kind::Uniform, 0.0, 2.0, 0);
  } else if (cfg.kind == "invariant") {
    set_init(cfg.init, cfg.has_init, InitSpec::Kind::Uniform, -1.0, 1.0, 0);
    set_init(cfg.init2, cfg.has_init2, InitSpec::Kind::Uniform, 1.0, 3.0, 1);
    if (cfg.fit_column.empty()) cfg.fit_column = cfg.metric;
    if (!cfg.has_record) {
      // one transport solve per recorded row; keep the row count moderate
      cfg.sim.record_stride = static_cast<int>(
          std::max<std::int64_t>(1, cfg.sim.steps() / 50));
      cfg.has_record = true;
    }
  }
  if (!cfg.has_fit_window) {
    cfg.fit_tmin = 0.0;
    cfg.fit_tmax = cfg.sim.T;
    cfg.has_fit_window = true;
  }
  cfg.validate();
  return cfg;
}

Builtin build_model(const ExperimentConfig& cfg) {
  Builtin m = builtin_model(cfg.model_name, cfg.beta);
  if (cfg.freeze_regime) {
    if (*cfg.freeze_regime < 0 || *cfg.freeze_regime >= m.spec.regimes)
      throw SimError("freeze-regime label " +
                     std::to_string(*cfg.freeze_regime + 1) + " outside 1.." +
                     std::to_string(m.spec.regimes));
    freeze_regime(m.spec);
  }
  if (cfg.q_override) override_q(m.spec, *cfg.q_override);
  return m;
}

int run_experiment(const ExperimentConfig& raw, const std::string& command) {
  try {
    const ExperimentConfig cfg = resolve(raw);
    if (cfg.kind == "verify") return run_verify(cfg, command);
    const Builtin m = build_model(cfg);
    Checks ck;
    if (cfg.kind == "moment-decay") run_moment(cfg, m, ck);
    else if (cfg.kind == "contraction" || cfg.kind == "contraction-switching")
      run_pair(cfg, m, ck);
    else if (cfg.kind == "picard") run_picard(cfg, m, ck);
    else if (cfg.kind == "invariant") run_invariant(cfg, m, ck);
    write_text(cfg.meta_path, echo_config(cfg, command));
    std::printf("wrote %s\n", cfg.meta_path.c_str());
    if (!ck.all) std::printf("%s: assertion failed\n", cfg.kind.c_str());
    return ck.all ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

int run_verify(const ExperimentConfig& raw, const std::string& command) {
  try {
    ExperimentConfig cfg = resolve(raw);
    const Builtin m = build_model(cfg);
    const int dim = m.spec.dim;

    std::vector<Vec> positions;
    const int npos = 1000;
    for (int k = 0; k < npos; ++k) {
      if (dim == 1) {
        positions.push_back(Vec::Constant(
            1, -10.0 + 20.0 * static_cast<double>(k) /
                           static_cast<double>(npos - 1)));
      } else {
        RngStream g(cfg.sim.seed, static_cast<std::uint32_t>(k), 0,
                    StreamTag::Init);
        Vec x(dim);
        for (int j = 0; j < dim; ++j) x[j] = -10.0 + 20.0 * g.uniform();
        positions.push_back(std::move(x));
      }
    }

    std::vector<measures::EmpiricalMeasure> mus;
    mus.push_back(
        measures::EmpiricalMeasure::from_points(Mat::Zero(dim, 1)));
    {
      const std::int64_t n = 201;
      Mat pts(dim, n);
      for (std::int64_t k = 0; k < n; ++k)
        pts.col(k) = Vec::Constant(
            dim, -1.0 + 2.0 * static_cast<double>(k) /
                            static_cast<double>(n - 1));
      mus.push_back(measures::EmpiricalMeasure::from_points(pts));
    }

    std::vector<lyapunov::DriftReport> reports;
    reports.push_back(
        lyapunov::check_drift_H2(m.spec, m.lyap, positions, mus));

    // Single-regime contraction: couplings in the first regime only.
    reports.push_back(lyapunov::check_contraction(
        m.spec, m.lyap, make_couplings(cfg.sim.seed, dim, 0)));

    // Per-regime contraction at the rate theta.
    {
      std::vector<lyapunov::PairedCloud> per;
      for (int r = 0; r < m.spec.regimes; ++r)
        for (auto& c : make_couplings(cfg.sim.seed, dim, r))
          per.push_back(std::move(c));
      lyapunov::ContractionOptions o;
      o.use_theta = true;
      reports.push_back(lyapunov::check_contraction(m.spec, m.lyap, per, o));
    }

    {
      std::vector<Vec> probes;
      for (int k = 0; k < 50; ++k)
        probes.push_back(positions[static_cast<std::size_t>(k * 20)]);
      reports.push_back(lyapunov::check_coupled_structure(m.lyap, probes));
    }

    bool all = true;
    std::string csv = lyapunov::DriftReport::csv_header() + "\n";
    std::printf("model %s\n", m.spec.name.c_str());
    for (const auto& r : reports) {
      std::printf("%s", r.text().c_str());
      csv += r.csv_row() + "\n";
      all = all && r.passed;
    }
    write_text(cfg.out_path, csv);
    std::printf("wrote %s\n", cfg.out_path.c_str());
    write_text(cfg.meta_path, echo_config(cfg, command));
    std::printf("wrote %s\n", cfg.meta_path.c_str());
    std::printf("verify: %s\n", all ? "all checks passed" : "check failed");
    return all ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

int run_distances(const std::string& path_a, const std::string& path_b,
                  const ExperimentConfig* model_cfg) {
  try {
    const auto mu = read_snapshot(path_a);
    const auto nu = read_snapshot(path_b);
    if (mu.dim() != nu.dim())
      throw SimError("snapshots have different dimensions");

    measures::OtOptions opts;
    const bool exact1d = mu.dim() == 1;
    auto print = [](const char* name, double v) {
      std::printf("%s = %s\n", name, fmt17(v).c_str());
    };
    if (exact1d) {
      print("W1", measures::wasserstein_1d(mu, nu, 1));
      print("W2", measures::wasserstein_1d(mu, nu, 2));
    } else {
      print("W1", measures::ot_cost(mu, nu,
                                    measures::GroundCost::euclidean(1), opts)
                      .value);
      print("W2", measures::ot_cost(mu, nu,
                                    measures::GroundCost::euclidean(2), opts)
                      .value);
    }
    if (model_cfg) {
      const Builtin m = build_model(*model_cfg);
      print("W_Vtilde",
            measures::ot_cost(
                mu, nu, measures::GroundCost::lyapunov(m.lyap.Vtilde.value),
                opts)
                .value);
      if (mu.has_regimes() && nu.has_regimes())
        print("W_d",
              measures::ot_cost(
                  mu, nu, measures::GroundCost::product(m.lyap.Vhat.value),
                  opts)
                  .value);
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

void write_snapshot(const std::string& path,
                    const particle::ParticleEnsemble& ens) {
  particle::TimeSeries ts;
  for (std::int64_t j = 0; j < ens.x.rows(); ++j)
    ts.columns.push_back("x_" + std::to_string(j + 1));
  ts.columns.push_back("regime");
  for (std::int64_t k = 0; k < ens.size(); ++k) {
    Vec row(ens.x.rows() + 1);
    row.head(ens.x.rows()) = ens.x.col(k);
    row[ens.x.rows()] =
        static_cast<double>(ens.regime[static_cast<std::size_t>(k)] + 1);
    ts.add_row(row);
  }
  ts.write_csv(path);
}

measures::EmpiricalMeasure read_snapshot(const std::string& path) {
  const auto ts = particle::TimeSeries::read_csv(path);
  const bool with_regime =
      !ts.columns.empty() && ts.columns.back() == "regime";
  const std::int64_t d =
      static_cast<std::int64_t>(ts.columns.size()) - (with_regime ? 1 : 0);
  if (d < 1) throw SimError(path + ": snapshot has no position columns");
  measures::EmpiricalMeasure mu;
  mu.atoms.resize(d, static_cast<std::int64_t>(ts.rows.size()));
  if (with_regime) mu.regimes.resize(ts.rows.size());
  for (std::size_t k = 0; k < ts.rows.size(); ++k) {
    mu.atoms.col(static_cast<std::int64_t>(k)) = ts.rows[k].head(d);
    if (with_regime) {
      const int label =
          static_cast<int>(std::llround(ts.rows[k][d]));
      if (label < 1)
        throw SimError(path + ": regime labels start at 1");
      mu.regimes[k] = label - 1;
    }
  }
  mu.validate();
  return mu;
}

}  // namespace mvx::cli
