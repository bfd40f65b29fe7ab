#include "mvx/builtin_models.hpp"

namespace mvx::cli {

namespace {

model::ScalarField square_field() {
  model::ScalarField f;
  f.value = [](const Vec& z) { return z[0] * z[0]; };
  f.gradient = [](const Vec& z) {
    Vec g(1);
    g[0] = 2.0 * z[0];
    return g;
  };
  f.hessian = [](const Vec&) {
    Mat h(1, 1);
    h(0, 0) = 2.0;
    return h;
  };
  return f;
}

// |x| with the kink conventions sign(0) = 0 and zero second derivative.
model::ScalarField abs_field(double scale) {
  model::ScalarField f;
  f.value = [scale](const Vec& z) { return scale * std::abs(z[0]); };
  f.gradient = [scale](const Vec& z) {
    Vec g(1);
    g[0] = scale * sign0(z[0]);
    return g;
  };
  f.hessian = [](const Vec&) { return Mat::Zero(1, 1); };
  return f;
}

}  // namespace

Builtin example1(double beta) {
  Builtin b;
  model::ModelSpec& s = b.spec;
  s.name = "example1";
  s.dim = 1;
  s.brownian_dim = 1;
  s.regimes = 2;
  s.functionals = {{"mean", [](const Vec& x) { return x[0]; }},
                   {"x2", [](const Vec& x) { return x[0] * x[0]; }}};
  // stats[0] is the mean of the law.
  s.drift = [beta](double, const Vec& x, const model::MeasureStats& st,
                   int i) {
    Vec out(1);
    out[0] = i == 0 ? -x[0] * x[0] * x[0] - 2.0 * (x[0] + beta * st[0])
                    : -2.0 * x[0];
    return out;
  };
  s.diffusion = [beta](double, const Vec& x, const model::MeasureStats& st,
                       int i) {
    Mat out(1, 1);
    out(0, 0) = i == 0 ? x[0] + beta * st[0] : x[0];
    return out;
  };
  Mat q(2, 2);
  q << -1.0, 1.0, 2.0, -2.0;
  s.q = model::RateMatrix::constant(q);

  model::LyapunovSpec& l = b.lyap;
  const model::ScalarField sq = square_field();
  l.V = {sq, sq};
  l.phi = sq.value;
  l.Vtilde = sq;
  l.Vhat = sq;
  l.lambda1 = -2.0;
  l.lambda2 = 2.0 * beta * beta;
  l.gamma = 2.0 - 2.0 * beta * beta;
  l.theta = 2.0 - 2.0 * beta * beta;
  l.K_hat = 4.0;  // (x-y)^2 <= 4 max(x^2, y^2), tight at y = -x
  return b;
}

Builtin example2() {
  Builtin b;
  model::ModelSpec& s = b.spec;
  s.name = "example2";
  s.dim = 1;
  s.brownian_dim = 1;
  s.regimes = 2;
  s.functionals = {{"mean", [](const Vec& x) { return x[0]; }},
                   {"absx", [](const Vec& x) { return std::abs(x[0]); }}};
  s.drift = [](double, const Vec& x, const model::MeasureStats&, int i) {
    Vec out(1);
    out[0] = i == 0 ? -x[0] * x[0] * x[0] - x[0] : -0.5 * x[0];
    return out;
  };
  s.diffusion = [](double, const Vec& x, const model::MeasureStats& st,
                   int i) {
    Mat out(1, 1);
    out(0, 0) = i == 0 ? st[0] : x[0] + 2.0 * st[0];
    return out;
  };
  s.q.m = 2;
  s.q.x_dependent = true;
  s.q.bound = 7.0 / 3.0 + 0.5;  // largest entry magnitude, row 2
  s.q.evaluate = [](const Vec& x) {
    const double up = 1.0 / 3.0 + 0.25 * std::cos(x[0]);
    const double down = 7.0 / 3.0 + 0.5 * std::sin(x[0]);
    Mat q(2, 2);
    q << -up, up, down, -down;
    return q;
  };

  model::LyapunovSpec& l = b.lyap;
  l.V = {abs_field(1.0), abs_field(2.0)};
  l.phi = abs_field(1.0).value;
  l.Vtilde = abs_field(1.0);
  l.Vhat = abs_field(1.0);
  l.lambda1 = -5.0 / 12.0;
  l.lambda2 = 0.0;
  l.gamma = 1.0;   // regime-1 contraction of |x - y|
  l.theta = 0.5;   // worst per-regime rate (regime 2)
  l.K_hat = 2.0;
  return b;
}

bool is_builtin(const std::string& name) {
  return name == "example1" || name == "example2";
}

Builtin builtin_model(const std::string& name, double beta) {
  if (name == "example1") return example1(beta);
  if (name == "example2") return example2();
  throw SimError("unknown model '" + name +
                 "'; builtins are example1 and example2");
}

void freeze_regime(model::ModelSpec& spec) {
  spec.q = model::RateMatrix::constant(Mat::Zero(spec.regimes, spec.regimes));
}

void override_q(model::ModelSpec& spec, const Mat& q) {
  if (static_cast<int>(q.rows()) != spec.regimes)
    throw SimError("override generator is " + std::to_string(q.rows()) + "x" +
                   std::to_string(q.cols()) + ", model has " +
                   std::to_string(spec.regimes) + " regimes");
  spec.q = model::RateMatrix::constant(q);
}

}  // namespace mvx::cli
