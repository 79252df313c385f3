#pragma once

// Checks of the moment and stability estimates along recorded trajectories.
// All functions are pure post-processing of TimeSeries data.

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coagfrag/integrator.hpp"
#include "coagfrag/kernel.hpp"
#include "coagfrag/operators.hpp"

namespace coagfrag {

/// Machine-readable outcome of one check. worst_margin is the smallest
/// (bound - value) / |bound| seen; negative means violated.
struct Verdict {
  std::string name;
  bool pass = false;
  double worst_margin = HUGE_VAL;
  double worst_time = 0.0;
  std::string detail;

  nlohmann::json to_json() const;
  static Verdict from_json(const nlohmann::json& j);
};

/// sigma from the first record: M_{m0} + M_1 + 3/(e(1-m1)) M_{m1} + log-mass.
double sigma_of(const TimeSeries& ts);

/// Trapezoid rule for int_0^t M_m ds at each record (m must be tracked).
std::vector<double> running_integral(const TimeSeries& ts, double m);

struct LyapunovReport {
  double m = 0.0;
  double rho = 0.0;
  double delta_rho = 0.0;
  double c1 = 0.0;
  double sigma = 0.0;
  double L0 = 0.0;
  std::vector<double> t;
  std::vector<double> L;            // L_m(t)
  std::vector<double> int_M_lambda;
  std::vector<double> log_j_flux;   // ln(j) * int flux
  std::vector<double> lhs;
  std::vector<double> rhs;          // L0 + C1 t
  std::optional<double> first_violation;
  Verdict verdict;
  /// int M_lambda <= (sigma + C1(m1) t) / delta_rho
  Verdict integral_bound;
};

LyapunovReport lyapunov_check(const TimeSeries& ts, double m, const ValidatedSpec& spec,
                              double rho);

/// M_m(t) <= max{M_m(0), C2(m)} (2+t)^((lambda-m)/(lambda-1)), rho = M_1(0).
Verdict low_moment_check(const TimeSeries& ts, double m, const ValidatedSpec& spec);
double lemma_c2(const ValidatedSpec& spec, double m, double sigma, double c1_m1, double rho);

struct HighMomentReport {
  double m = 0.0;
  double sup = 0.0;
  double sup_time = 0.0;
  Verdict verdict;
};

/// Requires m > 1 + lambda - alpha; passes iff sup M_m on the record is finite.
HighMomentReport high_moment_check(const TimeSeries& ts, double m, const ValidatedSpec& spec);

enum class GelationKind { MassConserving, Gelling, Inconclusive };
std::string to_string(GelationKind k);

class InsufficientRuns : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GelationVerdict {
  GelationKind kind = GelationKind::Inconclusive;
  std::optional<double> t_gel;
  std::vector<double> j;
  std::vector<double> loss;  // cumulative truncation loss at the common time
  double time = 0.0;
  double mass = 0.0;
  /// |L_n - L_{n-1}| / max(L_n, L_{n-1}) for the two largest j.
  double spread = 0.0;

  nlohmann::json to_json() const;
};

struct GelationRules {
  double spread_max = 0.2;        // Gelling: stable loss across the two largest j
  double gel_fraction = 0.01;     // Gelling: loss above this fraction of mass; also t_gel
  double decay_ratio_max = 0.65;  // MassConserving: loss ratio per doubling of j
  double zero_floor = 1e-12;      // losses below floor * mass count as zero
};

/// `runs` share physics and have strictly increasing j. The loss is compared
/// at the latest time common to all runs.
GelationVerdict gelation_scan(const std::vector<const TimeSeries*>& runs,
                              const GelationRules& rules = {});

struct ContractionReport {
  std::vector<double> t;
  std::vector<double> D;
  std::vector<double> bound;
  double R = 0.0;
  double sup_M_alpha = 0.0;
  double sup_M_high = 0.0;
  Verdict verdict;
};

/// sum (x^alpha + x^lambda) |f1 - f2| width over cells.
double weighted_distance(const State& a, const State& b, double alpha, double lambda);

/// D(t) <= factor D(0) exp(R t) at every time where both series hold a
/// snapshot. With D(0) = 0 the distance must stay below rel_tol times the
/// weighted norm of the first state.
ContractionReport contraction_check(const TimeSeries& a, const TimeSeries& b,
                                    const ValidatedSpec& spec, double factor = 1.05);

/// Test functions used for the weak-form residual.
struct TestFunction {
  std::string name;
  std::function<double(double)> theta;
};
std::vector<TestFunction> weak_test_functions(double m1);

struct WeakResidualReport {
  double max_residual = 0.0;  // normalised by sigma
  std::string worst_function;
  double worst_time = 0.0;
  /// Largest estimated error of the trapezoid rule in time, normalised like
  /// max_residual. Residuals are meaningless once this exceeds the tolerance.
  double quadrature_error = 0.0;
  Verdict verdict;
};

/// Compares sum theta N between consecutive snapshots with the trapezoid
/// integral of weak_form_terms; `tolerance` applies to the normalised value.
WeakResidualReport weak_residual(const TimeSeries& ts, const RateEvaluator& rates,
                                 const std::vector<TestFunction>& family, double tolerance);

}  // namespace coagfrag
