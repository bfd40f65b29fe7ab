#pragma once

#include "mvx/builtin_models.hpp"
#include "mvx/config.hpp"
#include "mvx/measures.hpp"

namespace mvx::cli {

/// Fills kind-dependent defaults (initial laws, fit window and column,
/// recording stride) so the echoed metadata pins the entire run. Idempotent.
ExperimentConfig resolve(const ExperimentConfig& cfg);

/// Builds the configured model: named builtin plus the generator override or
/// regime freeze. Checks regime labels against the model.
Builtin build_model(const ExperimentConfig& cfg);

/// Runs the configured experiment: writes the CSV, the metadata echo, and
/// optional terminal snapshots; prints one line per embedded assertion.
/// Returns 0 when all assertions pass, 1 when one fails, 2 on errors.
int run_experiment(const ExperimentConfig& cfg, const std::string& command);

/// Condition audits for the configured model: drift condition, integral
/// contraction, per-regime contraction, coupled-cost structure. Prints the
/// report blocks; writes them as CSV rows plus metadata. Exit status as
/// run_experiment.
int run_verify(const ExperimentConfig& cfg, const std::string& command);

/// Transport distances between two snapshot files; the model (when given)
/// adds the Lyapunov-cost and product-space distances.
int run_distances(const std::string& path_a, const std::string& path_b,
                  const ExperimentConfig* model_cfg);

/// Snapshot files: columns x_1..x_d then regime, labels 1..m.
void write_snapshot(const std::string& path,
                    const particle::ParticleEnsemble& ens);
measures::EmpiricalMeasure read_snapshot(const std::string& path);

}  // namespace mvx::cli
