#include "coagfrag/reference.hpp"

#include <cmath>

namespace coagfrag {

double exact_pure_fragmentation(double a0, double t, double x) {
  if (!(a0 >= 0.0) || !(t >= 0.0) || !(x > 0.0))
    throw std::domain_error("exact_pure_fragmentation: need a0 >= 0, t >= 0, x > 0");
  const double s = 1.0 + a0 * t;
  return s * s * std::exp(-s * x);
}

OracleSolution pure_fragmentation_oracle(double a0) {
  if (!(a0 >= 0.0)) throw std::domain_error("pure_fragmentation_oracle: a0 must be >= 0");
  return {[a0](double t, double x) { return exact_pure_fragmentation(a0, t, x); }, HUGE_VAL,
          "lambda = 2, B = 2, f(0,x) = exp(-x); solves f_t = -a0 x f + 2 a0 int_x^inf f dy"};
}

double multiplicative_gel_time(double K0, double M2_0) {
  if (!(K0 > 0.0) || !(M2_0 > 0.0)) throw std::domain_error("gel time needs K0, M2(0) > 0");
  return 1.0 / (2.0 * K0 * M2_0);
}

double multiplicative_M2(double K0, double M2_0, double t) {
  if (!(t >= 0.0)) throw std::domain_error("multiplicative_M2: t must be >= 0");
  if (K0 == 0.0 || M2_0 == 0.0) return M2_0;
  const double denom = 1.0 - 2.0 * K0 * M2_0 * t;
  if (!(denom > 0.0)) throw std::domain_error("multiplicative_M2: t at or beyond blow-up");
  return M2_0 / denom;
}

TimeSeries fine_reference(const RunConfig& config, const FineReferenceOptions& options) {
  config.check();
  const double wanted = std::ceil(options.resolution_factor *
                                  static_cast<double>(config.grid.resolved_cells()));
  if (wanted > static_cast<double>(options.max_cells))
    throw ResourceCapExceeded("fine_reference: " + std::to_string(static_cast<long>(wanted)) +
                              " cells exceeds the cap of " + std::to_string(options.max_cells));
  if (!(options.dt > 0.0)) throw std::invalid_argument("fine_reference: dt must be positive");

  const auto grid = make_grid(config.grid.x_min, config.grid.x_max,
                              static_cast<std::size_t>(wanted), GridKind::Uniform);
  const auto spec = validate(config.spec);
  const auto derived = derive_constants(spec, config.m0, config.m1);
  const RateEvaluator rates(grid, spec, config.trunc, config.coagulation, config.fragmentation);

  TimeSeries ts;
  ts.grid = grid;
  ts.exponents = {derived.m0, derived.m1, spec.lambda(), 2.0 * spec.lambda() - spec.alpha(),
                  spec.alpha(), config.extra_moments};
  ts.j = config.trunc.threshold(*grid);
  ts.rel_tol = config.rel_tol;
  const auto exps = ts.exponents.all();

  const double stride = std::min(config.output_stride, config.t_end);
  const double per_stride = std::ceil(stride / options.dt - 1e-9);
  const double dt = stride / per_stride;

  State s = config.initial.build(grid);
  double cum_loss = 0.0;
  StepStats stats;
  auto record = [&] {
    Record r;
    r.t = s.time;
    r.moments = moments(s, exps);
    r.lyapunov = lyapunov_value(r.moments, derived.m1);
    r.cum_trunc_loss = cum_loss;
    r.dt = stats.accepted ? dt : 0.0;
    r.stats = stats;
    r.snapshot = s;
    ts.records.push_back(std::move(r));
  };
  record();
  std::size_t k_out = 1;
  while (s.time < config.t_end) {
    const double target = std::min(config.t_end, static_cast<double>(k_out) * stride);
    while (s.time < target) {
      const double h = std::min(dt, target - s.time);
      // dt_min = h: a fixed-step oracle must not adapt.
      auto out = step(s, rates, h, h);
      cum_loss += out.mass_loss;
      const bool lands = h >= target - s.time;
      s = std::move(out.state);
      if (lands) s.time = target;
      ++stats.accepted;
    }
    record();
    ++k_out;
  }
  return ts;
}

}  // namespace coagfrag
