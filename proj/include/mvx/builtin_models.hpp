#pragma once

#include "mvx/model.hpp"

namespace mvx::cli {

/// A registered model together with its Lyapunov data.
struct Builtin {
  model::ModelSpec spec;
  model::LyapunovSpec lyap;
};

/// "example1": scalar double-well drift with a mean-field term of strength
/// beta in regime 1, linear pulling in regime 2, constant two-state
/// switching. V = x^2 in both regimes; decay rate limits -2 + 2 beta^2.
Builtin example1(double beta);

/// "example2": scalar model with deterministic drifts and mean-coupled
/// diffusions under a sinusoidally modulated two-state generator.
/// V(x,1) = |x|, V(x,2) = 2|x|; decay rate -5/12.
Builtin example2();

bool is_builtin(const std::string& name);

/// Looks up a builtin by name; beta only matters for "example1".
Builtin builtin_model(const std::string& name, double beta);

/// Turns off switching by replacing the generator with the zero matrix.
void freeze_regime(model::ModelSpec& spec);

/// Swaps in a constant generator (validated for the q-property).
void override_q(model::ModelSpec& spec, const Mat& q);

}  // namespace mvx::cli
