#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "coagfrag/grid.hpp"
#include "coagfrag/kernel.hpp"
#include "coagfrag/operators.hpp"

using namespace coagfrag;

namespace {

double mass_rate(const State& s, const std::vector<double>& rhs) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) sum += s.grid->pivot(i) * rhs[i] * s.grid->width(i);
  return sum;
}

double mass_scale(const State& s, const std::vector<double>& rhs) {
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    sum += std::abs(s.grid->pivot(i) * rhs[i] * s.grid->width(i));
  return sum;
}

State random_state(const GridPtr& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  State s(g);
  for (double& v : s.density) v = u(rng) < 0.2 ? 0.0 : std::exp(-20.0 * u(rng));
  return s;
}

CoefficientSpec spec_with(double lambda, double alpha, double nu) {
  CoefficientSpec s;
  s.lambda = lambda;
  s.alpha = alpha;
  s.daughter = PowerLawDaughter{nu};
  return s;
}

}  // namespace

TEST_SUITE("operators") {

TEST_CASE("truncation threshold") {
  const auto g = make_grid(1.0, 100.0, 20, GridKind::Geometric);
  CHECK(TruncationSpec::none().threshold(*g) == 100.0);
  CHECK(TruncationSpec::none().active_cells(*g) == 20);
  CHECK_THROWS_AS(TruncationSpec::cutoff(200.0).threshold(*g), std::domain_error);
  const auto t = TruncationSpec::cutoff(10.0);
  const std::size_t n = t.active_cells(*g);
  CHECK(g->pivot(n - 1) <= 10.0);
  CHECK(g->pivot(n) > 10.0);
}

TEST_CASE("zero state gives zero rates") {
  const auto g = make_grid(1e-3, 1e3, 96, GridKind::Geometric);
  const auto spec = validate(CoefficientSpec{});
  const auto r = RateEvaluator(g, spec, TruncationSpec::cutoff(1e2)).evaluate(State(g));
  for (double v : r.rhs) CHECK(v == 0.0);
  CHECK(r.ledger.coag_mass_flux_out == 0.0);
  CHECK(r.ledger.frag_mass_residual == 0.0);
}

TEST_CASE("coagulation mass rate equals minus the boundary flux") {
  std::mt19937_64 rng(1);
  const auto g = make_grid(1e-3, 1e3, 120, GridKind::Geometric);
  for (auto cs : {spec_with(2.0, 1.0, 0.0), spec_with(1.5, 0.6, -0.5), spec_with(1.8, 0.8, 0.0)}) {
    const auto spec = validate(cs);
    for (double j : {1.0, 30.0, 1e3}) {
      const auto trunc = j < 1e3 ? TruncationSpec::cutoff(j) : TruncationSpec::none();
      for (int n = 0; n < 20; ++n) {
        const auto s = random_state(g, rng);
        const auto r = coagulation_rhs(s, spec, trunc);
        CHECK(r.ledger.coag_mass_flux_out >= 0.0);
        CHECK(std::abs(mass_rate(s, r.rhs) + r.ledger.coag_mass_flux_out) <=
              1e-12 * mass_scale(s, r.rhs));
      }
    }
  }
}

TEST_CASE("pairs beyond the last active pivot only lose") {
  const auto g = make_grid(1.0, 5.0, 4, GridKind::Uniform);  // pivots 1.5 .. 4.5
  const auto spec = validate(CoefficientSpec{});
  const auto trunc = TruncationSpec::cutoff(4.5);
  State s(g, {0.0, 0.0, 0.7, 0.3});
  const auto r = coagulation_rhs(s, spec, trunc);
  for (double v : r.rhs) CHECK(v <= 0.0);
  CHECK(r.rhs[0] == 0.0);
  CHECK(r.rhs[1] == 0.0);
  CHECK(mass_rate(s, r.rhs) == doctest::Approx(-r.ledger.coag_mass_flux_out).epsilon(1e-15));
  CHECK(r.ledger.coag_gain_mass == 0.0);
  // 3.5 + 3.5, 3.5 + 4.5 and 4.5 + 4.5 all leave
  const double N2 = 0.7, N3 = 0.3;
  const double want = 0.5 * 2.0 * 3.5 * 3.5 * N2 * N2 * 7.0 + 2.0 * 3.5 * 4.5 * N2 * N3 * 8.0 +
                      0.5 * 2.0 * 4.5 * 4.5 * N3 * N3 * 9.0;
  CHECK(r.ledger.coag_mass_flux_out == doctest::Approx(want).epsilon(1e-13));
  CoagulationOperator op(g, spec, trunc);
  CHECK(op.kernel(0, 1) == doctest::Approx(eval_K(CoefficientSpec{}, 1.5, 2.5)));
  CHECK(op.lost_pairs() > 0);
}

TEST_CASE("without truncation no pair is lost inside the grid") {
  const auto g = make_grid(1.0, 100.0, 20, GridKind::Uniform);
  const auto spec = validate(CoefficientSpec{});
  State s(g);
  s.density[0] = 1.0;
  s.density[1] = 0.5;
  const auto r = coagulation_rhs(s, spec, TruncationSpec::none());
  CHECK(r.ledger.coag_mass_flux_out == 0.0);
  CHECK(std::abs(mass_rate(s, r.rhs)) <= 1e-13 * mass_scale(s, r.rhs));
  double number_rate = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) number_rate += r.rhs[i] * g->width(i);
  CHECK(number_rate < 0.0);
}

TEST_CASE("fragmentation is mass neutral") {
  std::mt19937_64 rng(2);
  const auto g = make_grid(1e-4, 1e4, 320, GridKind::Geometric);
  for (double nu : {0.0, -0.5, -1.0, -1.4}) {
    const auto spec = validate(spec_with(2.0, 1.0, nu));
    for (double j : {1e2, 1e4}) {
      const auto trunc = j < 1e4 ? TruncationSpec::cutoff(j) : TruncationSpec::none();
      FragmentationOperator op(g, spec, trunc);
      CHECK(op.max_renormalization() < 0.05);
      for (int n = 0; n < 10; ++n) {
        const auto s = random_state(g, rng);
        const auto r = fragmentation_rhs(s, spec, trunc);
        CHECK(std::abs(mass_rate(s, r.rhs)) <= 1e-13 * mass_scale(s, r.rhs));
        CHECK(std::abs(r.ledger.frag_mass_residual) <= 1e-13 * mass_scale(s, r.rhs));
      }
    }
  }
}

TEST_CASE("uniform daughters give a flat gain below the parent") {
  const auto g = make_grid(0.5, 16.5, 32, GridKind::Uniform);  // pivots 0.75 .. 16.25
  const auto spec = validate(CoefficientSpec{});
  FragmentationOperator op(g, spec, TruncationSpec::none());
  const std::size_t k = 20;
  for (std::size_t i = 2; i + 2 < k; ++i)
    CHECK(op.daughter_weight(i, k) / g->width(i) ==
          doctest::Approx(op.daughter_weight(i + 1, k) / g->width(i + 1)).epsilon(1e-12));
  CHECK(op.rate(k) == doctest::Approx(g->pivot(k)));
  double mass = 0.0;
  for (std::size_t i = 0; i <= k; ++i) mass += g->pivot(i) * op.daughter_weight(i, k);
  CHECK(mass == doctest::Approx(g->pivot(k)).epsilon(1e-14));
}

TEST_CASE("gains are non-negative and losses proportional to the cell") {
  std::mt19937_64 rng(4);
  const auto g = make_grid(1e-3, 1e3, 120, GridKind::Geometric);
  const auto spec = validate(CoefficientSpec{});
  RateEvaluator rates(g, spec, TruncationSpec::cutoff(1e2));
  for (int n = 0; n < 10; ++n) {
    const auto s = random_state(g, rng);
    std::vector<double> N(s.size()), dndt(s.size()), loss(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) N[i] = s.number(i);
    StepLedger ledger;
    rates.number_rates(N, dndt, ledger, loss);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(loss[i] >= 0.0);
      CHECK(dndt[i] >= -loss[i] * N[i] * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("evaluation is deterministic") {
  std::mt19937_64 rng(5);
  const auto g = make_grid(1e-3, 1e3, 120, GridKind::Geometric);
  const auto spec = validate(CoefficientSpec{});
  RateEvaluator rates(g, spec, TruncationSpec::cutoff(1e2));
  const auto s = random_state(g, rng);
  const auto a = rates.evaluate(s);
  const auto b = rates.evaluate(s);
  CHECK(a.rhs == b.rhs);
}

TEST_CASE("weak form with the mass test function reproduces the ledger") {
  const auto g = make_grid(1e-3, 1e3, 240, GridKind::Geometric);
  const auto spec = validate(CoefficientSpec{});
  const auto trunc = TruncationSpec::cutoff(10.0);
  const auto s = project(exponential_profile(2.0), g);
  const auto w = weak_form_terms(s, spec, trunc, [](double x) { return x; });
  const auto r = RateEvaluator(g, spec, trunc).evaluate(s);
  CHECK(w.coag_term == doctest::Approx(-r.ledger.coag_mass_flux_out).epsilon(1e-12));
  CHECK(w.boundary_term == doctest::Approx(r.ledger.coag_mass_flux_out).epsilon(1e-12));
  CHECK(std::abs(w.frag_term) <= 1e-13 * r.ledger.frag_loss_mass);
  CHECK(std::abs(w.chi_term()) <= 1e-12 * r.ledger.coag_loss_mass);
}

TEST_CASE("weak form with x ln x recovers b_ln M_lambda") {
  const auto g = make_grid(1e-6, 1e3, 9 * 160, GridKind::Geometric);
  const auto spec = validate(CoefficientSpec{});
  const auto s = project(exponential_profile(1.0), g);
  const auto w = weak_form_terms(s, RateEvaluator(g, spec, TruncationSpec::none(), false, true),
                                 [](double x) { return x * std::log(x); });
  const double want = -spec.a0() * b_ln(spec) * moment(s, spec.lambda());
  CHECK(w.frag_term == doctest::Approx(want).epsilon(1e-2));
}

}  // TEST_SUITE
