#include "coagfrag/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/tanh_sinh.hpp>

namespace coagfrag {

namespace {

constexpr double kSlack = 1e-12;

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// int_a^b z^s dz for 0 <= a <= b, written to avoid cancellation on narrow
// intervals.
double power_integral(double s, double a, double b) {
  if (a >= b) return 0.0;
  const double e = s + 1.0;
  if (a == 0.0) {
    if (!(e > 0.0)) throw std::domain_error("power_integral: divergent at 0");
    return std::pow(b, e) / e;
  }
  const double log_ratio = std::log(b / a);
  if (e == 0.0) return log_ratio;
  return std::pow(a, e) * std::expm1(e * log_ratio) / e;
}

// int_a^b z^k (-ln z) dz for k > -1.
double neg_log_power_integral(double k, double a, double b) {
  const double e = k + 1.0;
  auto F = [e](double z) {
    if (z == 0.0) return 0.0;
    return std::pow(z, e) * (std::log(z) / e - 1.0 / (e * e));
  };
  return -(F(b) - F(a));
}

double horner(const std::vector<double>& c, double z) {
  double acc = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
  return acc;
}

std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k) out[i + k] += a[i] * b[k];
  return out;
}

void check_tabulated_shape(const TabulatedDaughter& t) {
  const auto& bp = t.breakpoints;
  if (bp.size() < 2 || bp.front() != 0.0 || bp.back() != 1.0)
    throw AssumptionViolation(Assumption::ParameterDomain,
                              "tabulated B: breakpoints must run from 0 to 1");
  for (std::size_t i = 1; i < bp.size(); ++i)
    if (!(bp[i] > bp[i - 1]))
      throw AssumptionViolation(Assumption::ParameterDomain,
                                "tabulated B: breakpoints must be strictly increasing");
  if (t.coefficients.size() != bp.size() - 1)
    throw AssumptionViolation(Assumption::ParameterDomain,
                              "tabulated B: one coefficient list per piece required");
  for (const auto& c : t.coefficients) {
    if (c.empty())
      throw AssumptionViolation(Assumption::ParameterDomain,
                                "tabulated B: empty coefficient list");
    for (double v : c)
      if (!std::isfinite(v))
        throw AssumptionViolation(Assumption::ParameterDomain,
                                  "tabulated B: non-finite coefficient");
  }
}

}  // namespace

std::string_view to_string(Assumption a) {
  switch (a) {
    case Assumption::ParameterDomain: return "parameter-domain";
    case Assumption::ExponentRange: return "exponent-range";
    case Assumption::DaughterMass: return "daughter-mass";
    case Assumption::SmallSizeSingularity: return "small-size-singularity";
  }
  return "unknown";
}

AssumptionViolation::AssumptionViolation(Assumption which, const std::string& detail)
    : std::invalid_argument("AssumptionViolation(" + std::string(to_string(which)) +
                            "): " + detail),
      which_(which) {}

NotInAdmissibleSet::NotInAdmissibleSet(double m, double p)
    : std::domain_error("fragmentation moment diverges: (m, p) = (" + fmt_double(m) +
                        ", " + fmt_double(p) + ") is not admissible"),
      m_(m),
      p_(p) {}

double ValidatedSpec::nu() const noexcept { return singularity_exponent(spec_.daughter); }

double singularity_exponent(const DaughterSpec& daughter) {
  if (const auto* pl = std::get_if<PowerLawDaughter>(&daughter)) return pl->nu;
  return 0.0;
}

ValidatedSpec validate(const CoefficientSpec& spec) {
  for (double v : {spec.lambda, spec.alpha, spec.K0, spec.a0})
    if (!std::isfinite(v))
      throw AssumptionViolation(Assumption::ParameterDomain, "non-finite parameter");
  if (!(spec.K0 > 0.0))
    throw AssumptionViolation(Assumption::ParameterDomain,
                              "K0 must be positive, got " + fmt_double(spec.K0));
  if (!(spec.a0 > 0.0))
    throw AssumptionViolation(Assumption::ParameterDomain,
                              "a0 must be positive, got " + fmt_double(spec.a0));

  const double lambda = spec.lambda;
  if (!(lambda > 1.0 && lambda <= 2.0 + kSlack))
    throw AssumptionViolation(Assumption::ExponentRange,
                              "lambda must lie in (1, 2], got " + fmt_double(lambda));
  const double alpha_lo = std::max(0.5, lambda - 1.0);
  const double alpha_hi = lambda / 2.0;
  if (spec.alpha < alpha_lo - kSlack || spec.alpha > alpha_hi + kSlack)
    throw AssumptionViolation(Assumption::ExponentRange,
                              "alpha must lie in [" + fmt_double(alpha_lo) + ", " +
                                  fmt_double(alpha_hi) + "], got " +
                                  fmt_double(spec.alpha));

  if (const auto* pl = std::get_if<PowerLawDaughter>(&spec.daughter)) {
    if (!std::isfinite(pl->nu))
      throw AssumptionViolation(Assumption::ParameterDomain, "non-finite nu");
    if (!(pl->nu > -2.0))
      throw AssumptionViolation(Assumption::DaughterMass,
                                "nu must exceed -2 for z B(z) to be integrable, got " +
                                    fmt_double(pl->nu));
    if (pl->nu > 0.0)
      throw AssumptionViolation(Assumption::ParameterDomain,
                                "nu must lie in (-2, 0], got " + fmt_double(pl->nu));
  } else {
    const auto& tab = std::get<TabulatedDaughter>(spec.daughter);
    check_tabulated_shape(tab);
    constexpr int kSamples = 64;
    for (std::size_t p = 0; p + 1 < tab.breakpoints.size(); ++p) {
      const double lo = tab.breakpoints[p];
      const double hi = tab.breakpoints[p + 1];
      for (int s = 0; s <= kSamples; ++s) {
        const double z = lo + (hi - lo) * s / kSamples;
        if (horner(tab.coefficients[p], z) < -kSlack)
          throw AssumptionViolation(Assumption::DaughterMass,
                                    "tabulated B is negative at z = " + fmt_double(z));
      }
    }
    const double mass = daughter_partial_moment(spec.daughter, 1.0, 0.0, 1.0);
    if (std::abs(mass - 1.0) > 1e-10)
      throw AssumptionViolation(Assumption::DaughterMass,
                                "int_0^1 z B(z) dz must equal 1, got " + fmt_double(mass));
  }

  const double nu = singularity_exponent(spec.daughter);
  if (!(-nu - 1.0 < spec.alpha))
    throw AssumptionViolation(Assumption::SmallSizeSingularity,
                              "need -nu - 1 < alpha, got -nu - 1 = " +
                                  fmt_double(-nu - 1.0) + " and alpha = " +
                                  fmt_double(spec.alpha));
  return ValidatedSpec(spec);
}

double eval_K(const CoefficientSpec& spec, double x, double y) {
  if (!(x > 0.0) || !(y > 0.0)) throw std::domain_error("eval_K: sizes must be positive");
  const double beta = spec.lambda - spec.alpha;
  const double t1 = std::pow(x, spec.alpha) * std::pow(y, beta);
  const double t2 = std::pow(y, spec.alpha) * std::pow(x, beta);
  // t1 + t2 and t2 + t1 round identically, so K is exactly symmetric.
  return spec.K0 * (t1 + t2);
}

double eval_a(const CoefficientSpec& spec, double x) {
  if (!(x > 0.0)) throw std::domain_error("eval_a: size must be positive");
  return spec.a0 * std::pow(x, spec.lambda - 1.0);
}

double eval_B(const DaughterSpec& daughter, double z) {
  if (!(z > 0.0) || z > 1.0) throw std::domain_error("eval_B: z must lie in (0, 1]");
  if (const auto* pl = std::get_if<PowerLawDaughter>(&daughter))
    return (pl->nu + 2.0) * std::pow(z, pl->nu);
  const auto& tab = std::get<TabulatedDaughter>(daughter);
  auto it = std::upper_bound(tab.breakpoints.begin(), tab.breakpoints.end(), z);
  std::size_t piece = static_cast<std::size_t>(it - tab.breakpoints.begin());
  piece = std::clamp<std::size_t>(piece, 1, tab.coefficients.size()) - 1;
  return horner(tab.coefficients[piece], z);
}

double eval_b(const CoefficientSpec& spec, double x, double y) {
  if (!(x > 0.0) || !(x < y)) throw std::domain_error("eval_b: need 0 < x < y");
  return eval_B(spec.daughter, x / y) / y;
}

bool in_admissible_set(const DaughterSpec& daughter, double m, double p) {
  const double nu = singularity_exponent(daughter);
  return m > -1.0 && p >= 1.0 && m + p * nu > -1.0;
}

double daughter_partial_moment(const DaughterSpec& daughter, double q, double z_lo,
                               double z_hi) {
  if (!(z_lo >= 0.0) || !(z_hi <= 1.0) || z_lo > z_hi)
    throw std::domain_error("daughter_partial_moment: need 0 <= z_lo <= z_hi <= 1");
  if (const auto* pl = std::get_if<PowerLawDaughter>(&daughter))
    return (pl->nu + 2.0) * power_integral(q + pl->nu, z_lo, z_hi);
  const auto& tab = std::get<TabulatedDaughter>(daughter);
  double acc = 0.0;
  for (std::size_t p = 0; p + 1 < tab.breakpoints.size(); ++p) {
    const double lo = std::max(z_lo, tab.breakpoints[p]);
    const double hi = std::min(z_hi, tab.breakpoints[p + 1]);
    if (lo >= hi) continue;
    const auto& c = tab.coefficients[p];
    for (std::size_t n = 0; n < c.size(); ++n)
      if (c[n] != 0.0) acc += c[n] * power_integral(q + static_cast<double>(n), lo, hi);
  }
  return acc;
}

double frag_moment(const DaughterSpec& daughter, double m, double p) {
  if (!in_admissible_set(daughter, m, p)) throw NotInAdmissibleSet(m, p);
  if (const auto* pl = std::get_if<PowerLawDaughter>(&daughter))
    return std::pow(pl->nu + 2.0, p) / (m + p * pl->nu + 1.0);

  const auto& tab = std::get<TabulatedDaughter>(daughter);
  double acc = 0.0;
  const bool integer_power = p == std::floor(p) && p <= 64.0;
  for (std::size_t k = 0; k + 1 < tab.breakpoints.size(); ++k) {
    const double lo = tab.breakpoints[k];
    const double hi = tab.breakpoints[k + 1];
    const auto& c = tab.coefficients[k];
    if (integer_power) {
      std::vector<double> powered{1.0};
      for (int i = 0; i < static_cast<int>(p); ++i) powered = poly_mul(powered, c);
      for (std::size_t n = 0; n < powered.size(); ++n)
        if (powered[n] != 0.0)
          acc += powered[n] * power_integral(m + static_cast<double>(n), lo, hi);
    } else {
      boost::math::quadrature::tanh_sinh<double> integrator;
      auto f = [&](double z) { return std::pow(z, m) * std::pow(horner(c, z), p); };
      acc += integrator.integrate(f, lo, hi, 1e-13);
    }
  }
  return acc;
}

double b_ln(const DaughterSpec& daughter) {
  if (const auto* pl = std::get_if<PowerLawDaughter>(&daughter)) return 1.0 / (pl->nu + 2.0);
  const auto& tab = std::get<TabulatedDaughter>(daughter);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < tab.breakpoints.size(); ++k) {
    const auto& c = tab.coefficients[k];
    for (std::size_t n = 0; n < c.size(); ++n)
      if (c[n] != 0.0)
        acc += c[n] * neg_log_power_integral(static_cast<double>(n) + 1.0,
                                             tab.breakpoints[k], tab.breakpoints[k + 1]);
  }
  return acc;
}

double rho_star(const ValidatedSpec& spec) {
  return spec.a0() * b_ln(spec) / (2.0 * spec.K0() * std::numbers::ln2);
}

double delta_rho(const ValidatedSpec& spec, double rho) {
  return spec.K0() * std::numbers::ln2 * (rho_star(spec) - rho);
}

double young_constant(double A, double theta, double eps) {
  if (!(theta >= 0.0 && theta < 1.0))
    throw std::domain_error("young_constant: theta must lie in [0, 1)");
  if (!(A >= 0.0) || !(eps > 0.0))
    throw std::domain_error("young_constant: need A >= 0 and eps > 0");
  if (A == 0.0) return 0.0;
  const double q = 1.0 / (1.0 - theta);
  // pow(0, 0) == 1 covers theta == 0, where the constant is A itself.
  return (1.0 - theta) * std::pow(theta, theta * q) * std::pow(A, q) *
         std::pow(eps, -theta * q);
}

double lemma_c1(const ValidatedSpec& spec, double m, double rho) {
  const double lambda = spec.lambda();
  if (!(m < 1.0)) throw std::domain_error("lemma_c1: m must be < 1");
  if (m < 2.0 - lambda - kSlack) throw std::domain_error("lemma_c1: m must be >= 2 - lambda");
  if (!(m > -spec.nu() - 1.0)) throw std::domain_error("lemma_c1: m must exceed -nu - 1");
  const double rs = rho_star(spec);
  if (!(rho > 0.0 && rho < rs))
    throw std::domain_error("lemma_c1: rho must lie in (0, rho_star)");

  const double theta = std::max(0.0, (m + lambda - 2.0) / (lambda - 1.0));
  const double A = spec.a0() * frag_moment(spec, m, 1.0) *
                   std::pow(rho, (1.0 - m) / (lambda - 1.0));
  const double factor = std::numbers::e * (1.0 - m) / 3.0;
  const double eps = factor * delta_rho(spec, rho);
  return young_constant(A, theta, eps) / factor;
}

bool Interval::contains(double v) const noexcept {
  const bool above = lo_closed ? v >= lo : v > lo;
  const bool below = hi_closed ? v <= hi : v < hi;
  return above && below;
}

bool Interval::empty() const noexcept {
  if (lo < hi) return false;
  return !(lo == hi && lo_closed && hi_closed);
}

Interval m0_window(const ValidatedSpec& spec) {
  const double singular = -spec.nu() - 1.0;
  Interval w{};
  if (singular >= 0.0) {
    w.lo = singular;
    w.lo_closed = false;
  } else {
    w.lo = 0.0;
    w.lo_closed = true;
  }
  w.hi = std::min(spec.alpha(), 1.0);
  w.hi_closed = false;
  return w;
}

Interval m1_window(const ValidatedSpec& spec, double m0) {
  return Interval{std::max(m0, 2.0 - spec.lambda()), 1.0, true, false};
}

DerivedConstants derive_constants(const ValidatedSpec& spec, std::optional<double> m0,
                                  std::optional<double> m1) {
  DerivedConstants d;
  d.b_ln = b_ln(spec);
  d.rho_star = rho_star(spec);
  d.m0_range = m0_window(spec);
  if (d.m0_range.empty()) throw std::domain_error("m0 window is empty");
  d.m0 = m0.value_or(0.5 * (d.m0_range.lo + d.m0_range.hi));
  if (!d.m0_range.contains(d.m0))
    throw std::domain_error("m0 = " + fmt_double(d.m0) + " outside its admissible window");
  d.m1_range = m1_window(spec, d.m0);
  d.m1 = m1.value_or(0.5 * (d.m1_range.lo + d.m1_range.hi));
  if (!d.m1_range.contains(d.m1))
    throw std::domain_error("m1 = " + fmt_double(d.m1) + " outside its admissible window");
  return d;
}

double sigma_lower_bound(double moment_m0, double moment_1, double moment_m1,
                         double log_mass, double m1) {
  return moment_m0 + moment_1 + 3.0 / (std::numbers::e * (1.0 - m1)) * moment_m1 + log_mass;
}

std::optional<Rational> exact_rational(double v, long long max_den) {
  if (!std::isfinite(v)) return std::nullopt;
  // Continued-fraction convergents h/k.
  long long h_prev = 1, h = static_cast<long long>(std::floor(v));
  long long k_prev = 0, k = 1;
  double frac = v - std::floor(v);
  for (int iter = 0; iter < 64; ++iter) {
    if (static_cast<double>(h) / static_cast<double>(k) == v) return Rational(h, k);
    if (frac == 0.0) break;
    const double inv = 1.0 / frac;
    const double a_d = std::floor(inv);
    if (a_d > 1e12) break;
    const auto a = static_cast<long long>(a_d);
    frac = inv - a_d;
    const long long h_next = a * h + h_prev;
    const long long k_next = a * k + k_prev;
    if (k_next > max_den) break;
    h_prev = h;
    h = h_next;
    k_prev = k;
    k = k_next;
  }
  return std::nullopt;
}

std::optional<Rational> b_ln_exact(const DaughterSpec& daughter) {
  const auto* pl = std::get_if<PowerLawDaughter>(&daughter);
  if (!pl) return std::nullopt;
  auto nu = exact_rational(pl->nu);
  if (!nu) return std::nullopt;
  return Rational(1) / (*nu + 2);
}

std::optional<Rational> frag_moment_exact(const DaughterSpec& daughter, double m, double p) {
  const auto* pl = std::get_if<PowerLawDaughter>(&daughter);
  if (!pl || p != std::floor(p) || p < 1.0 || p > 16.0) return std::nullopt;
  if (!in_admissible_set(daughter, m, p)) throw NotInAdmissibleSet(m, p);
  auto nu = exact_rational(pl->nu);
  auto mr = exact_rational(m);
  if (!nu || !mr) return std::nullopt;
  const auto pi = static_cast<int>(p);
  Rational num(1);
  for (int i = 0; i < pi; ++i) num *= (*nu + 2);
  return num / (*mr + Rational(pi) * *nu + 1);
}

}  // namespace coagfrag
