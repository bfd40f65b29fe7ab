#pragma once

#include "mvx/model.hpp"
#include "mvx/switching.hpp"
#include "mvx/timeseries.hpp"

#include <optional>

namespace mvx::particle {

// N-particle approximation of the mean-field dynamics: explicit first-order
// stepping of positions with the empirical stats frozen per step, and regime
// chains driven per particle. Every random draw is addressed by
// (seed, particle, step, tag), so results are bitwise independent of the
// thread schedule.

/// Positions and regimes of N particles at a common time. `step` is the
/// global step index used to address the random streams.
struct ParticleEnsemble {
  double t = 0.0;
  std::uint32_t step = 0;
  std::uint64_t seed = 0;
  Mat x;                    // dim x N
  std::vector<int> regime;  // size N

  std::int64_t size() const { return x.cols(); }
};

struct SimConfig {
  double dt = 1e-3;
  double T = 1.0;
  std::int64_t particles = 5000;
  std::uint64_t seed = 0;
  switching::SwitchMode mode = switching::SwitchMode::Thinning;
  double trunc = 0.0;     // truncation radius for the coefficients; 0 = off
  int threads = 1;
  int record_stride = 1;  // record rows every this many steps (t=0 and T always)
  int ensemble = 0;       // 0: primary stream tags; 1: the B-suffixed tags

  std::int64_t steps() const {
    validate();
    return static_cast<std::int64_t>(std::llround(T / dt));
  }

  void validate() const {
    if (!(dt > 0.0)) throw SimError("dt must be positive");
    if (T < 0.0) throw SimError("T must be nonnegative");
    if (particles < 1) throw SimError("need at least one particle");
    if (threads < 1) throw SimError("thread count must be positive");
    if (record_stride < 1) throw SimError("record stride must be positive");
    if (trunc < 0.0) throw SimError("truncation radius cannot be negative");
  }
};

/// Position update x + b dt + sigma sqrt(dt) xi with the coefficients read at
/// (t, x, stats, regime). The simulation kernel applies the same formula with
/// x replaced by its truncation inside the coefficient arguments only.
inline Vec step_position(const model::ModelSpec& spec, double t, const Vec& x,
                         const model::MeasureStats& stats, int regime,
                         double dt, const Vec& xi) {
  auto [b, s] = model::evaluate_drift_diffusion(spec, t, x, stats, regime);
  return x + b * dt + s * (std::sqrt(dt) * xi);
}

/// Draws N initial particles from the sampler using the init stream tags.
ParticleEnsemble init_ensemble(const model::ModelSpec& spec,
                               const model::InitSampler& init,
                               const SimConfig& cfg);

/// One explicit step of the whole ensemble: empirical stats are computed
/// once, positions advance with per-particle Brownian draws, regimes advance
/// from the raw pre-step position. With cfg.trunc > 0 the coefficients see
/// the truncated position and the truncated pushforward of the empirical
/// law; the state itself is never projected.
void advance(ParticleEnsemble& ens, const model::ModelSpec& spec,
             const SimConfig& cfg);

/// One step of advance() returned as a fresh ensemble (no truncation).
ParticleEnsemble euler_step(const ParticleEnsemble& ens,
                            const model::ModelSpec& spec, double dt,
                            switching::SwitchMode mode);

struct SimResult {
  TimeSeries series;
  ParticleEnsemble final_state;
  // First recorded time any particle's norm exceeded the truncation radius;
  // NaN when it never happened or truncation was off.
  double first_exit = std::numeric_limits<double>::quiet_NaN();
};

/// Runs the ensemble to the horizon, recording at the stride grid: regime
/// occupancy fractions, the declared moments, and E V / E phi when a
/// Lyapunov spec is given, each with trailing standard-error columns.
/// `on_record` (when set) sees the ensemble at every recorded step.
SimResult simulate(
    const model::ModelSpec& spec, const model::LyapunovSpec* lyap,
    const model::InitSampler& init, const SimConfig& cfg,
    const std::function<void(const ParticleEnsemble&)>& on_record = {});

struct PairResult {
  TimeSeries series;
  ParticleEnsemble final_x, final_y;
  double first_exit = std::numeric_limits<double>::quiet_NaN();
};

/// Two ensembles driven by identical Brownian increments, each reading its
/// own empirical stats; regimes move under the meet-and-merge coupling for a
/// constant rate matrix and under the basic coupling otherwise. Initial draws
/// for both sides replay the same stream, so equal init samplers give equal
/// paths. Records, besides the first ensemble's columns: pair_EVdiff
/// = E Vtilde(X-Y), pair_agree = regime agreement fraction, and pair_cost
/// = E sqrt(1_{regimes differ} + Vhat(X-Y)), an upper bound for the
/// product-space transport distance at every time.
PairResult synchronous_pair_simulate(
    const model::ModelSpec& spec, const model::LyapunovSpec& lyap,
    const model::InitSampler& init1, const model::InitSampler& init2,
    const SimConfig& cfg,
    const std::function<void(const ParticleEnsemble&, const ParticleEnsemble&)>&
        on_record = {});

struct PicardResult {
  // distances[r-1] is the sup over the recording grid of the Wasserstein-2
  // distance between the law flows of rounds r-1 and r, for r = 1..rounds.
  std::vector<double> distances;
};

/// Law iteration: round 0 freezes the law flow at the initial empirical law;
/// round r simulates the linear dynamics whose coefficients read the stats
/// flow recorded in round r-1, with identical random streams every round.
PicardResult picard_law_iteration(const model::ModelSpec& spec,
                                  const model::InitSampler& init,
                                  const SimConfig& cfg, int rounds);

}  // namespace mvx::particle
