#include "coagfrag/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace coagfrag {

namespace {

// Denormals appear in the far tail and slow every kernel pass by orders of
// magnitude; flush them for the duration of a run.
class FlushDenormals {
 public:
  FlushDenormals() {
#if defined(__SSE2__)
    saved_ = _mm_getcsr();
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
  }
  ~FlushDenormals() {
#if defined(__SSE2__)
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

std::string describe(const char* what, double t, double dt) {
  std::ostringstream os;
  os.precision(17);
  os << what << " at t = " << t << " (dt = " << dt << ")";
  return os.str();
}

std::vector<double> numbers_of(const State& s) {
  std::vector<double> n(s.size());
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = s.number(i);
  return n;
}

State state_of(const GridPtr& grid, std::span<const double> number, double t) {
  State s(grid, t);
  for (std::size_t i = 0; i < number.size(); ++i) s.density[i] = number[i] / grid->width(i);
  return s;
}

StepLedger average(const StepLedger& a, const StepLedger& b) {
  StepLedger r;
  r.coag_mass_flux_out = 0.5 * (a.coag_mass_flux_out + b.coag_mass_flux_out);
  r.frag_mass_residual = 0.5 * (a.frag_mass_residual + b.frag_mass_residual);
  r.coag_gain_mass = 0.5 * (a.coag_gain_mass + b.coag_gain_mass);
  r.coag_loss_mass = 0.5 * (a.coag_loss_mass + b.coag_loss_mass);
  r.frag_gain_mass = 0.5 * (a.frag_gain_mass + b.frag_gain_mass);
  r.frag_loss_mass = 0.5 * (a.frag_loss_mass + b.frag_loss_mass);
  return r;
}

enum class Attempt { Ok, Negative };

// Heun step from (n, f0). Writes the Euler stage into `euler`, the stage-1
// rates into `f1` and the Heun result into `out`.
struct HeunWork {
  std::vector<double> euler;
  std::vector<double> f1;
  std::vector<double> out;
  StepLedger ledger1;

  explicit HeunWork(std::size_t n) : euler(n), f1(n), out(n) {}

  Attempt attempt(const RateEvaluator& rates, std::span<const double> n,
                  std::span<const double> f0, double dt) {
    for (std::size_t i = 0; i < n.size(); ++i) {
      euler[i] = n[i] + dt * f0[i];
      if (!(euler[i] >= 0.0)) return Attempt::Negative;
    }
    ledger1 = StepLedger{};
    rates.number_rates(euler, f1, ledger1);
    for (std::size_t i = 0; i < n.size(); ++i) {
      out[i] = n[i] + 0.5 * dt * (f0[i] + f1[i]);
      if (!(out[i] >= 0.0)) return Attempt::Negative;
    }
    return Attempt::Ok;
  }
};

}  // namespace

std::size_t GridConfig::resolved_cells() const {
  if (n_cells > 0) return n_cells;
  if (kind == GridKind::Uniform)
    throw std::invalid_argument("uniform grid needs an explicit cell count");
  return cells_for_decades(x_min, x_max, cells_per_decade);
}

GridPtr GridConfig::build() const { return make_grid(x_min, x_max, resolved_cells(), kind); }

State InitialCondition::build(const GridPtr& grid) const {
  if (!(mass >= 0.0) || !std::isfinite(mass))
    throw std::invalid_argument("initial mass must be finite and non-negative");
  State s;
  switch (kind) {
    case InitialKind::Exponential:
      s = project(exponential_profile(scale), grid);
      break;
    case InitialKind::Monodisperse:
      s = project(smoothed_monodisperse_profile(center, width), grid);
      break;
    case InitialKind::PowerLawCutoff:
      if (!(exponent < 2.0))
        throw std::invalid_argument("power-law exponent must be below 2 for finite mass");
      s = project(power_law_cutoff_profile(exponent, cutoff), grid);
      break;
    case InitialKind::Tabulated: {
      const auto table = load_tabulated_profile(file);
      s = project(std::cref(table), grid, 1e-10, table.x);
      break;
    }
  }
  return scale_to_mass(std::move(s), mass);
}

void RunConfig::check() const {
  auto fail = [](const char* msg) { throw std::invalid_argument(msg); };
  if (!(t_end >= 0.0) || !std::isfinite(t_end)) fail("t_end must be finite and non-negative");
  if (!(dt_min > 0.0)) fail("dt_min must be positive");
  if (!(dt_init >= dt_min)) fail("dt_init must be at least dt_min");
  if (!(dt_max >= dt_init)) fail("dt_max must be at least dt_init");
  if (!(rel_tol > 0.0) || !(abs_tol >= 0.0)) fail("tolerances must be positive");
  if (!(output_stride > 0.0)) fail("output_stride must be positive");
  if (snapshot_every < 0.0) fail("snapshot_every must be non-negative");
  if (!(dust_tol >= 0.0 && dust_tol < 1e-6)) fail("dust_tol must lie in [0, 1e-6)");
  if (!coagulation && !fragmentation) fail("at least one of coagulation and fragmentation must be on");
}

StepTooSmall::StepTooSmall(double t, double dt, State last)
    : std::runtime_error(describe("step size underflow", t, dt)), last_(std::move(last)) {}

NonFiniteState::NonFiniteState(double t, State snapshot)
    : std::runtime_error(describe("non-finite state", t, 0.0)), snapshot_(std::move(snapshot)) {}

std::vector<double> TrackedExponents::all() const {
  std::vector<double> v{m0, m1, 1.0, lambda, high, alpha};
  v.insert(v.end(), extras.begin(), extras.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<const Record*> TimeSeries::snapshots() const {
  std::vector<const Record*> out;
  for (const auto& r : records)
    if (r.snapshot) out.push_back(&r);
  return out;
}

double lyapunov_value(const MomentReport& m, double m1) {
  return m.log_mass + m.at(m1) / (std::numbers::e * (1.0 - m1));
}

StepOutcome step(const State& state, const RateEvaluator& rates, double dt, double dt_min) {
  if (!(*state.grid == rates.grid())) throw std::invalid_argument("step: grid mismatch");
  if (!(dt > 0.0)) throw std::invalid_argument("step: dt must be positive");
  FlushDenormals guard;
  const auto n = numbers_of(state);
  std::vector<double> f0(n.size());
  StepLedger ledger0;
  rates.number_rates(n, f0, ledger0);
  HeunWork work(n.size());
  while (work.attempt(rates, n, f0, dt) != Attempt::Ok) {
    dt *= 0.5;
    if (dt < dt_min) throw StepTooSmall(state.time, dt, state);
  }
  StepOutcome out;
  out.state = state_of(state.grid, work.out, state.time + dt);
  out.ledger = average(ledger0, work.ledger1);
  out.dt = dt;
  out.mass_loss = dt * out.ledger.coag_mass_flux_out;
  return out;
}

StepOutcome step(const State& state, const ValidatedSpec& spec, TruncationSpec trunc, double dt,
                 double dt_min) {
  return step(state, RateEvaluator(state.grid, spec, trunc), dt, dt_min);
}

TimeSeries run(const RunConfig& config) {
  config.check();
  const auto grid = config.grid.build();
  return run(config, config.initial.build(grid));
}

TimeSeries run(const RunConfig& config, const State& initial) {
  config.check();
  const auto spec = validate(config.spec);
  const auto derived = derive_constants(spec, config.m0, config.m1);
  const GridPtr grid = initial.grid;
  if (!initial.is_finite() || !initial.is_nonnegative())
    throw std::invalid_argument("initial state must be finite and non-negative");

  FlushDenormals guard;
  const RateEvaluator rates(grid, spec, config.trunc, config.coagulation, config.fragmentation);

  TimeSeries ts;
  ts.grid = grid;
  ts.exponents = {derived.m0, derived.m1, spec.lambda(), 2.0 * spec.lambda() - spec.alpha(),
                  spec.alpha(), config.extra_moments};
  ts.j = config.trunc.threshold(*grid);
  ts.rel_tol = config.rel_tol;
  const auto exps = ts.exponents.all();

  const std::size_t n_cells = grid->size();
  std::vector<double> n = numbers_of(initial);
  std::vector<double> f0(n_cells);
  std::vector<double> loss0(n_cells);
  HeunWork work(n_cells);
  StepLedger ledger0;
  StepStats stats;
  double t = 0.0;
  double cum_loss = 0.0;
  double cum_dust = 0.0;
  double dt = config.dt_init;
  double last_dt = 0.0;
  double prev_err = 1.0;

  double next_snapshot = config.snapshot_every > 0.0 ? config.snapshot_every : config.output_stride;
  auto record = [&](bool final_record) {
    State s = ts.records.empty() ? initial : state_of(grid, n, t);
    Record r;
    r.t = t;
    r.moments = moments(s, exps);
    r.lyapunov = lyapunov_value(r.moments, derived.m1);
    r.cum_trunc_loss = cum_loss;
    r.cum_dust_loss = cum_dust;
    r.dt = last_dt;
    r.stats = stats;
    const double eps = 1e-9 * config.output_stride;
    if (ts.records.empty() || final_record || t >= next_snapshot - eps) {
      r.snapshot = std::move(s);
      if (!ts.records.empty()) {
        while (next_snapshot <= t + eps) {
          if (config.snapshot_every > 0.0)
            next_snapshot += config.snapshot_every;
          else
            next_snapshot *= 2.0;
        }
      }
    }
    ts.records.push_back(std::move(r));
  };

  auto eval_stage0 = [&] {
    ledger0 = StepLedger{};
    rates.number_rates(n, f0, ledger0, loss0);
  };

  // Explicit stability bound from the largest per-capita removal rate among
  // cells that actually hold material.
  auto stiffness_limit = [&] {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_cells; ++i)
      if (n[i] > config.abs_tol * grid->width(i)) worst = std::max(worst, loss0[i]);
    return worst > 0.0 ? 0.5 / worst : config.dt_max;
  };

  // Positivity: the Euler stage stays non-negative below n_i / -f0_i, and for
  // N' = G - L N the Heun stage stays non-negative while dt L <= 2. Cells with
  // negligible content still count here, unlike in the accuracy guard above.
  auto positivity_limit = [&] {
    double euler = HUGE_VAL;
    double worst = 0.0;
    for (std::size_t i = 0; i < n_cells; ++i) {
      if (f0[i] < 0.0) euler = std::min(euler, n[i] / -f0[i]);
      if (n[i] > 0.0) worst = std::max(worst, loss0[i]);
    }
    return std::min(0.9 * euler, worst > 0.0 ? 1.9 / worst : HUGE_VAL);
  };

  // Far-tail cells with vanishing content would otherwise set the step
  // through the positivity limit while contributing nothing.
  auto flush_dust = [&] {
    if (config.dust_tol == 0.0) return;
    double mass = 0.0;
    for (std::size_t i = 0; i < n_cells; ++i) mass += grid->pivot(i) * n[i];
    const double floor = config.dust_tol * mass;
    for (std::size_t i = 0; i < n_cells; ++i) {
      const double m = grid->pivot(i) * n[i];
      if (m > 0.0 && m < floor) {
        cum_dust += m;
        n[i] = 0.0;
      }
    }
  };

  record(false);
  eval_stage0();
  // Steps land on every output time and, when dense snapshots are requested,
  // on every snapshot time as well.
  std::size_t k_out = 1;
  std::size_t k_snap = 1;
  auto next_target = [&] {
    double target = std::min(config.t_end, static_cast<double>(k_out) * config.output_stride);
    if (config.snapshot_every > 0.0)
      target = std::min(target, static_cast<double>(k_snap) * config.snapshot_every);
    return target;
  };
  while (t < config.t_end) {
    const double target = next_target();
    const double remaining = target - t;
    double h = std::min({dt, config.dt_max, stiffness_limit(), positivity_limit()});
    const bool lands = h >= remaining;
    if (lands) h = remaining;

    const Attempt a = work.attempt(rates, n, f0, h);
    if (a == Attempt::Negative) {
      ++stats.rejected_negative;
      dt = 0.5 * h;
      if (dt < config.dt_min) throw StepTooSmall(t, dt, state_of(grid, n, t));
      continue;
    }

    // Mass-weighted norm: cells are weighted by their pivot so that the far
    // tail, which carries negligible mass, does not dictate the step.
    double err_mass = 0.0;
    double scale_mass = 0.0;
    for (std::size_t i = 0; i < n_cells; ++i) {
      const double x = grid->pivot(i);
      scale_mass += x * (config.abs_tol * grid->width(i) +
                         config.rel_tol * std::max(n[i], work.out[i]));
      err_mass += x * 0.5 * h * std::abs(work.f1[i] - f0[i]);
    }
    const double err = err_mass > 0.0 ? err_mass / scale_mass : 0.0;
    if (err > 1.0) {
      ++stats.rejected_error;
      dt = h * std::max(0.2, 0.9 / std::sqrt(err));
      if (dt < config.dt_min) throw StepTooSmall(t, dt, state_of(grid, n, t));
      continue;
    }

    cum_loss += 0.5 * h * (ledger0.coag_mass_flux_out + work.ledger1.coag_mass_flux_out);
    n.swap(work.out);
    t = lands ? target : t + h;
    last_dt = h;
    ++stats.accepted;
    for (double v : n)
      if (!std::isfinite(v)) throw NonFiniteState(t, state_of(grid, n, t));
    flush_dust();

    const double e = std::max(err, 1e-10);
    const double factor = std::clamp(0.9 * std::pow(e, -0.35) * std::pow(prev_err, 0.2), 0.2, 5.0);
    prev_err = e;
    // A step shortened only to hit an output time says nothing about the
    // controller's preferred step.
    dt = lands && h < dt ? std::max(dt, h * factor) : h * factor;
    dt = std::clamp(dt, config.dt_min, config.dt_max);

    eval_stage0();
    if (lands) {
      record(t >= config.t_end);
      const double eps = 1e-9 * config.output_stride;
      while (static_cast<double>(k_out) * config.output_stride <= t + eps) ++k_out;
      if (config.snapshot_every > 0.0)
        while (static_cast<double>(k_snap) * config.snapshot_every <= t + eps) ++k_snap;
    }
  }
  return ts;
}

}  // namespace coagfrag
