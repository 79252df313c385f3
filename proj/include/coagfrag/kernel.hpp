#pragma once

// Balanced-growth coagulation and fragmentation coefficients:
//
//   K(x,y) = K0 (x^alpha y^(lambda-alpha) + x^(lambda-alpha) y^alpha)
//   a(x)   = a0 x^(lambda-1)
//   b(x,y) = B(x/y) / y,   0 < x < y
//
// together with the scalar constants derived from them (fragmentation
// moments, the critical mass rho_star and the moment-estimate constants).

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/rational.hpp>

namespace coagfrag {

using Rational = boost::rational<long long>;

/// B(z) = (nu + 2) z^nu on (0,1), nu in (-2, 0].
struct PowerLawDaughter {
  double nu = 0.0;
};

/// Piecewise polynomial B on a breakpoint mesh 0 = z_0 < ... < z_P = 1.
/// coefficients[p][n] multiplies z^n on [z_p, z_{p+1}] (global variable z,
/// not a local one). Bounded pieces, so the admissible set is that of nu = 0.
struct TabulatedDaughter {
  std::vector<double> breakpoints;
  std::vector<std::vector<double>> coefficients;
};

using DaughterSpec = std::variant<PowerLawDaughter, TabulatedDaughter>;

struct CoefficientSpec {
  double lambda = 2.0;
  double alpha = 1.0;
  double K0 = 1.0;
  double a0 = 1.0;
  DaughterSpec daughter = PowerLawDaughter{};
};

/// Which structural assumption on the coefficients failed.
enum class Assumption {
  ParameterDomain,       // K0, a0 positive and finite; nu <= 0
  ExponentRange,         // lambda in (1,2], alpha in [max(1/2, lambda-1), lambda/2]
  DaughterMass,          // B >= 0 and int_0^1 z B(z) dz = 1
  SmallSizeSingularity,  // -nu - 1 < alpha
};

std::string_view to_string(Assumption a);

class AssumptionViolation : public std::invalid_argument {
 public:
  AssumptionViolation(Assumption which, const std::string& detail);
  Assumption which() const noexcept { return which_; }

 private:
  Assumption which_;
};

/// Raised when a fragmentation moment b_{m,p} diverges.
class NotInAdmissibleSet : public std::domain_error {
 public:
  NotInAdmissibleSet(double m, double p);
  double m() const noexcept { return m_; }
  double p() const noexcept { return p_; }

 private:
  double m_;
  double p_;
};

/// A CoefficientSpec that passed validate(). Only validate() constructs one.
class ValidatedSpec {
 public:
  const CoefficientSpec& get() const noexcept { return spec_; }
  double lambda() const noexcept { return spec_.lambda; }
  double alpha() const noexcept { return spec_.alpha; }
  double gamma() const noexcept { return spec_.lambda - 1.0; }
  double K0() const noexcept { return spec_.K0; }
  double a0() const noexcept { return spec_.a0; }
  /// Exponent governing the small-z singularity of B (0 for tabulated B).
  double nu() const noexcept;

 private:
  friend ValidatedSpec validate(const CoefficientSpec& spec);
  explicit ValidatedSpec(CoefficientSpec spec) : spec_(std::move(spec)) {}
  CoefficientSpec spec_;
};

/// Checks every structural assumption; throws AssumptionViolation naming the
/// first one that fails.
ValidatedSpec validate(const CoefficientSpec& spec);

double eval_K(const CoefficientSpec& spec, double x, double y);
double eval_a(const CoefficientSpec& spec, double x);
/// Daughter density b(x,y) = B(x/y)/y for 0 < x < y.
double eval_b(const CoefficientSpec& spec, double x, double y);
double eval_B(const DaughterSpec& daughter, double z);

/// Small-size exponent of B used for the admissible set (0 when tabulated).
double singularity_exponent(const DaughterSpec& daughter);

/// (m,p) with m > -1, p >= 1 and m + p nu > -1. The boundary m + p nu = -1 is
/// excluded.
bool in_admissible_set(const DaughterSpec& daughter, double m, double p);

/// b_{m,p} = int_0^1 z^m B(z)^p dz. Throws NotInAdmissibleSet when it diverges.
double frag_moment(const DaughterSpec& daughter, double m, double p);
inline double frag_moment(const ValidatedSpec& spec, double m, double p) {
  return frag_moment(spec.get().daughter, m, p);
}

/// int_{z_lo}^{z_hi} z^q B(z) dz for 0 <= z_lo <= z_hi <= 1, in closed form.
/// Requires q + nu > -1 when z_lo == 0.
double daughter_partial_moment(const DaughterSpec& daughter, double q, double z_lo,
                               double z_hi);

/// b_ln = int_0^1 z |ln z| B(z) dz, closed form for both daughter kinds.
double b_ln(const DaughterSpec& daughter);
inline double b_ln(const ValidatedSpec& spec) { return b_ln(spec.get().daughter); }

/// Critical mass a0 b_ln / (2 K0 ln 2).
double rho_star(const ValidatedSpec& spec);

/// K0 ln 2 (rho_star - rho); positive below the critical mass.
double delta_rho(const ValidatedSpec& spec, double rho);

/// Smallest C with A X^theta <= eps X + C for all X >= 0 (theta in [0,1)).
double young_constant(double A, double theta, double eps);

/// Constant of the log-moment Lyapunov estimate: the smallest C1 such that
///   a0 b_{m,1} rho^((1-m)/(lambda-1)) X^((m+lambda-2)/(lambda-1))
///     <= (e(1-m) delta_rho / 3) X + (e(1-m)/3) C1     for all X >= 0.
/// Requires m in [2 - lambda, 1), m > -nu - 1 and 0 < rho < rho_star.
double lemma_c1(const ValidatedSpec& spec, double m, double rho);

struct Interval {
  double lo;
  double hi;
  bool lo_closed;
  bool hi_closed;
  bool contains(double v) const noexcept;
  bool empty() const noexcept;
};

/// Admissible window for the small-size exponent m0: (-nu-1, alpha) ∩ [0,1).
Interval m0_window(const ValidatedSpec& spec);
/// Admissible window for m1 given m0: [m0,1) ∩ [2-lambda,1).
Interval m1_window(const ValidatedSpec& spec, double m0);

struct DerivedConstants {
  double b_ln = 0.0;
  double rho_star = 0.0;
  Interval m0_range{};
  double m0 = 0.0;
  Interval m1_range{};
  double m1 = 0.0;
};

/// Derived scalars. m0/m1 default to the midpoints of their windows.
DerivedConstants derive_constants(const ValidatedSpec& spec,
                                  std::optional<double> m0 = std::nullopt,
                                  std::optional<double> m1 = std::nullopt);

/// Lower bound for sigma:
///   M_{m0} + M_1 + 3/(e(1-m1)) M_{m1} + int x|ln x| f.
double sigma_lower_bound(double moment_m0, double moment_1, double moment_m1,
                         double log_mass, double m1);

/// Rational approximation of v with denominator <= max_den when it converts
/// back to exactly v; nullopt otherwise.
std::optional<Rational> exact_rational(double v, long long max_den = 1000000);

/// b_ln = 1/(nu+2) as an exact fraction when nu is rational (power law only).
std::optional<Rational> b_ln_exact(const DaughterSpec& daughter);

/// b_{m,p} = (nu+2)^p/(m+p nu+1) exactly for rational m, nu and integer p.
std::optional<Rational> frag_moment_exact(const DaughterSpec& daughter, double m,
                                          double p);

}  // namespace coagfrag
