#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "coagfrag/grid.hpp"
#include "coagfrag/kernel.hpp"
#include "coagfrag/operators.hpp"

namespace coagfrag {

struct GridConfig {
  double x_min = 1e-4;
  double x_max = 1e4;
  GridKind kind = GridKind::Geometric;
  /// Used for geometric grids when n_cells == 0.
  double cells_per_decade = 160.0;
  std::size_t n_cells = 0;

  std::size_t resolved_cells() const;
  GridPtr build() const;
};

enum class InitialKind { Exponential, Monodisperse, PowerLawCutoff, Tabulated };

/// Named initial profile, projected on the grid and scaled to `mass`.
struct InitialCondition {
  InitialKind kind = InitialKind::Exponential;
  double mass = 0.0;
  double scale = 1.0;     // exponential: exp(-x/scale)
  double center = 1.0;    // monodisperse: Gaussian bump
  double width = 0.1;
  double exponent = 0.5;  // power law: x^-exponent exp(-x/cutoff)
  double cutoff = 1.0;
  std::filesystem::path file;  // tabulated (size, density) pairs

  State build(const GridPtr& grid) const;
};

struct RunConfig {
  CoefficientSpec spec;
  GridConfig grid;
  InitialCondition initial;
  TruncationSpec trunc;
  double t_end = 0.0;
  double dt_init = 1e-4;
  double dt_min = 1e-12;
  double dt_max = 1.0;
  double rel_tol = 1e-6;
  double abs_tol = 1e-14;
  /// Cells holding less than dust_tol times the current mass are emptied
  /// after each step and the removed mass is booked separately. 0 disables.
  double dust_tol = 1e-40;
  double output_stride = 0.1;
  std::vector<double> extra_moments;
  std::optional<double> m0;
  std::optional<double> m1;
  bool coagulation = true;
  bool fragmentation = true;
  /// > 0: keep a full state every this many time units; 0: sparse geometric
  /// schedule (initial, final and t = stride * 2^k).
  double snapshot_every = 0.0;

  /// Throws std::invalid_argument on inconsistent numerics.
  void check() const;
};

class StepTooSmall : public std::runtime_error {
 public:
  StepTooSmall(double t, double dt, State last);
  const State& last_state() const noexcept { return last_; }

 private:
  State last_;
};

class NonFiniteState : public std::runtime_error {
 public:
  NonFiniteState(double t, State snapshot);
  const State& snapshot() const noexcept { return snapshot_; }

 private:
  State snapshot_;
};

/// Exponents recorded at every output time.
struct TrackedExponents {
  double m0 = 0.0;
  double m1 = 0.0;
  double lambda = 0.0;
  double high = 0.0;  // 2 lambda - alpha
  double alpha = 0.0;
  std::vector<double> extras;

  std::vector<double> all() const;
};

struct StepStats {
  std::size_t accepted = 0;
  std::size_t rejected_error = 0;
  std::size_t rejected_negative = 0;
};

struct Record {
  double t = 0.0;
  MomentReport moments;
  /// sum x|ln x| f + M_{m1} / (e (1 - m1))
  double lyapunov = 0.0;
  /// Mass that has left through the truncation boundary up to t.
  double cum_trunc_loss = 0.0;
  /// Mass removed by the dust flush up to t.
  double cum_dust_loss = 0.0;
  double dt = 0.0;
  StepStats stats;
  std::optional<State> snapshot;
};

struct TimeSeries {
  GridPtr grid;
  TrackedExponents exponents;
  double j = 0.0;
  double rel_tol = 0.0;
  std::vector<Record> records;

  const Record& front() const { return records.front(); }
  const Record& back() const { return records.back(); }
  /// Records that carry a full state.
  std::vector<const Record*> snapshots() const;
};

double lyapunov_value(const MomentReport& m, double m1);

struct StepOutcome {
  State state;
  StepLedger ledger;  // stage average
  double dt = 0.0;    // step actually taken
  double mass_loss = 0.0;
};

/// One Heun step of size dt, halving dt while a stage would turn negative.
StepOutcome step(const State& state, const RateEvaluator& rates, double dt,
                 double dt_min = 1e-12);
StepOutcome step(const State& state, const ValidatedSpec& spec, TruncationSpec trunc,
                 double dt, double dt_min = 1e-12);

/// Adaptive integration to config.t_end from the configured initial condition.
TimeSeries run(const RunConfig& config);
/// Same, from an explicit initial state on the configured grid.
TimeSeries run(const RunConfig& config, const State& initial);

}  // namespace coagfrag
