#pragma once

#include "mvx/particle.hpp"

#include <optional>

namespace mvx::cli {

/// Initial-law choice for one ensemble. Vectors hold one entry per
/// dimension; scalars broadcast. `regime` is zero-based internally.
struct InitSpec {
  enum class Kind { Point, Uniform, Gaussian };
  Kind kind = Kind::Uniform;
  Vec a, b;  // point: a; uniform: [a, b]; gaussian: mean a, stddev b
  int regime = 0;
};

/// Parsed experiment description: sections [model], [sim], [experiment],
/// [output] of the config format, defaults filled.
struct ExperimentConfig {
  // [model]
  std::string model_name;
  double beta = 0.5;
  std::optional<Mat> q_override;      // constant generator replacing the
                                      // model's own
  std::optional<int> freeze_regime;   // no switching; start in this regime

  // [sim]
  particle::SimConfig sim;
  bool has_record = false;  // record stride was given explicitly
  InitSpec init;
  InitSpec init2;  // second ensemble / coupled side
  bool has_init = false, has_init2 = false;

  // [experiment]
  std::string kind = "moment-decay";
  int rounds = 4;
  double fit_tmin = 0.0, fit_tmax = 0.0;
  bool has_fit_window = false;
  std::string fit_column;    // defaults per kind
  std::string bound_column = "EV";
  double delta = 0.15;       // statistical allowance for bound checks
  std::string metric = "wd";
  std::optional<double> assert_slope_max;
  std::optional<double> assert_bound_factor;
  std::vector<double> assert_bound_times;
  bool assert_decreasing = false;
  std::optional<double> assert_agreement_min;
  double agreement_time = 3.0;
  bool assert_ci_excludes_zero = false;

  // [output]
  std::string out_path = "mvx-out.csv";
  std::string snapshot_path;  // optional terminal state dump
  std::string meta_path;      // defaults to out_path + ".meta"

  void validate() const;
};

/// Parses the config file. Unknown sections or keys, malformed values, and
/// constraint violations are hard errors carrying the line number.
ExperimentConfig load_config(const std::string& path);

/// Same parser over in-memory text; `origin` names the source in errors.
ExperimentConfig parse_config(const std::string& text,
                              const std::string& origin);

/// Serializes the config as a reloadable file with every value explicit,
/// headed by '#' comments (version, seed, the invoking command). Reloading
/// the echo and re-running reproduces the CSV byte for byte.
std::string echo_config(const ExperimentConfig& cfg,
                        const std::string& command);

}  // namespace mvx::cli
