#include "mvx/experiments.hpp"
#include "mvx/switching.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <string>

namespace {

struct FlagState {
  std::string kind;
  std::string model;
  std::string config;
  std::string out;
  std::string snapshot;
  std::string swmode;
  double beta = 0.0;
  double dt = 0.0;
  double horizon = 0.0;
  double trunc = 0.0;
  std::int64_t particles = 0;
  std::uint64_t seed = 0;
  int rounds = 0;
  int threads = 0;
};

void add_common(CLI::App* sub, FlagState& o, bool with_rounds) {
  sub->add_option("--config", o.config, "experiment description file");
  sub->add_option("--beta", o.beta, "mean-field coupling strength");
  sub->add_option("--particles", o.particles, "ensemble size");
  sub->add_option("--dt", o.dt, "time step");
  sub->add_option("-T,--horizon", o.horizon, "final time");
  sub->add_option("--seed", o.seed, "base seed for all streams");
  sub->add_option("--switch-mode", o.swmode,
                  "regime stepping: thinning or first-order");
  sub->add_option("--trunc", o.trunc,
                  "coefficient truncation radius, 0 disables");
  sub->add_option("--threads", o.threads, "worker threads");
  sub->add_option("--out", o.out, "output CSV path");
  sub->add_option("--snapshot", o.snapshot, "terminal ensemble CSV path");
  if (with_rounds)
    sub->add_option("--rounds", o.rounds, "law iteration rounds");
}

void apply_flags(const CLI::App* sub, const FlagState& o,
                 mvx::cli::ExperimentConfig& cfg) {
  if (sub->count("--beta")) cfg.beta = o.beta;
  if (sub->count("--particles")) cfg.sim.particles = o.particles;
  if (sub->count("--dt")) cfg.sim.dt = o.dt;
  if (sub->count("--horizon")) cfg.sim.T = o.horizon;
  if (sub->count("--seed")) cfg.sim.seed = o.seed;
  if (sub->count("--switch-mode"))
    cfg.sim.mode = mvx::switching::parse_switch_mode(o.swmode);
  if (sub->count("--trunc")) cfg.sim.trunc = o.trunc;
  if (sub->count("--threads")) cfg.sim.threads = o.threads;
  if (sub->count("--out")) {
    // a defaulted metadata path follows the new output path
    if (cfg.meta_path == cfg.out_path + ".meta") cfg.meta_path.clear();
    cfg.out_path = o.out;
  }
  if (sub->count("--snapshot")) cfg.snapshot_path = o.snapshot;
  const auto* rounds = sub->get_option_no_throw("--rounds");
  if (rounds && rounds->count()) cfg.rounds = o.rounds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "interacting-particle simulator for mean-field dynamics with "
      "state-dependent regime switching"};
  app.require_subcommand(1);

  std::string command;
  for (int i = 0; i < argc; ++i) {
    if (i) command += ' ';
    command += argv[i];
  }

  FlagState o;
  auto* run = app.add_subcommand("run", "run one experiment kind");
  run->add_option("kind", o.kind,
                  "moment-decay, contraction, contraction-switching, picard, "
                  "invariant, or verify")
      ->required();
  run->add_option("model", o.model, "builtin model name");
  add_common(run, o, true);

  auto* verify =
      app.add_subcommand("verify", "audit the standing hypotheses for a model");
  verify->add_option("model", o.model, "builtin model name");
  add_common(verify, o, false);

  std::string path_a, path_b;
  auto* dist = app.add_subcommand(
      "distances", "transport distances between two snapshot files");
  dist->add_option("csvA", path_a, "first snapshot CSV")->required();
  dist->add_option("csvB", path_b, "second snapshot CSV")->required();
  dist->add_option("--model", o.model,
                   "builtin model providing the Lyapunov costs");
  dist->add_option("--beta", o.beta, "mean-field coupling strength");

  CLI11_PARSE(app, argc, argv);

  try {
    if (dist->parsed()) {
      if (dist->count("--model")) {
        mvx::cli::ExperimentConfig c;
        c.model_name = o.model;
        if (dist->count("--beta")) c.beta = o.beta;
        return mvx::cli::run_distances(path_a, path_b, &c);
      }
      return mvx::cli::run_distances(path_a, path_b, nullptr);
    }

    const CLI::App* sub = run->parsed() ? run : verify;
    mvx::cli::ExperimentConfig cfg;
    if (sub->count("--config")) cfg = mvx::cli::load_config(o.config);
    apply_flags(sub, o, cfg);
    cfg.kind = run->parsed() ? o.kind : "verify";
    if (sub->count("model")) cfg.model_name = o.model;
    if (cfg.model_name.empty())
      throw mvx::SimError(
          "no model selected; pass a model name or a config with one");
    return mvx::cli::run_experiment(cfg, command);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
