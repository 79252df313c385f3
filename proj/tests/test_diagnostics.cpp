#include <doctest.h>

#include <cmath>
#include <vector>

#include "coagfrag/diagnostics.hpp"

using namespace coagfrag;

namespace {

RunConfig subcritical(double t_end) {
  RunConfig c;
  c.grid.x_min = 1e-3;
  c.grid.x_max = 1e3;
  c.grid.cells_per_decade = 20;
  c.initial.mass = 0.2;
  c.trunc = TruncationSpec::cutoff(1e2);
  c.t_end = t_end;
  c.output_stride = 0.25;
  return c;
}

// Loss history rising linearly to `final_loss` at t = 1.
TimeSeries synthetic(double j, double mass, double final_loss) {
  TimeSeries ts;
  ts.j = j;
  for (int k = 0; k <= 10; ++k) {
    Record r;
    r.t = 0.1 * k;
    r.cum_trunc_loss = final_loss * r.t;
    r.moments.moments[1.0] = mass - r.cum_trunc_loss;
    ts.records.push_back(r);
  }
  return ts;
}

GelationVerdict scan(const std::vector<TimeSeries>& runs) {
  std::vector<const TimeSeries*> p;
  for (const auto& r : runs) p.push_back(&r);
  return gelation_scan(p);
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("verdict records round-trip through json") {
  Verdict v{"lyapunov", true, 0.25, 3.5, "m=0.75"};
  const auto back = Verdict::from_json(v.to_json());
  CHECK(back.name == v.name);
  CHECK(back.pass == v.pass);
  CHECK(back.worst_margin == v.worst_margin);
  CHECK(back.worst_time == v.worst_time);
  CHECK(back.detail == v.detail);
}

TEST_CASE("checks are trivial at t = 0") {
  const auto spec = validate(CoefficientSpec{});
  const auto ts = run(subcritical(0.0));
  const auto rep = lyapunov_check(ts, ts.exponents.m1, spec, 0.2);
  CHECK(rep.verdict.pass);
  CHECK(rep.lhs.front() < rep.rhs.front());
  CHECK(rep.integral_bound.pass);
  const auto low = low_moment_check(ts, ts.exponents.m0, spec);
  CHECK(low.pass);
  CHECK(low.worst_margin >= 0.0);
}

TEST_CASE("lemma checks along a short sub-threshold run") {
  const auto spec = validate(CoefficientSpec{});
  const auto ts = run(subcritical(4.0));
  const auto rep = lyapunov_check(ts, ts.exponents.m1, spec, 0.2);
  CHECK(rep.verdict.pass);
  CHECK(rep.integral_bound.pass);
  CHECK_FALSE(rep.first_violation.has_value());
  for (std::size_t k = 1; k < rep.int_M_lambda.size(); ++k)
    CHECK(rep.int_M_lambda[k] >= rep.int_M_lambda[k - 1]);
  CHECK(low_moment_check(ts, ts.exponents.m0, spec).pass);
  const auto high = high_moment_check(ts, ts.exponents.high, spec);
  CHECK(high.verdict.pass);
  CHECK(std::isfinite(high.sup));
}

TEST_CASE("domain errors") {
  const auto spec = validate(CoefficientSpec{});
  const auto ts = run(subcritical(0.5));
  CHECK_THROWS_AS(lyapunov_check(ts, ts.exponents.m1 - 0.1, spec, 0.2), std::domain_error);
  CHECK_THROWS_AS(lyapunov_check(ts, 1.0, spec, 0.2), std::domain_error);
  CHECK_THROWS_AS(lyapunov_check(ts, ts.exponents.m1, spec, 0.5), std::domain_error);
  CHECK_THROWS_AS(low_moment_check(ts, -1.0, spec), std::domain_error);
  CHECK_THROWS_AS(high_moment_check(ts, 2.0, spec), std::domain_error);
}

TEST_CASE("high moments of the zero state") {
  const auto spec = validate(CoefficientSpec{});
  auto c = subcritical(1.0);
  const auto ts = run(c, State(c.grid.build()));
  const auto rep = high_moment_check(ts, ts.exponents.high, spec);
  CHECK(rep.verdict.pass);
  CHECK(rep.sup == 0.0);
}

TEST_CASE("monodisperse start keeps high moments bounded") {
  const auto spec = validate(CoefficientSpec{});
  auto c = subcritical(10.0);
  c.initial.kind = InitialKind::Monodisperse;
  c.initial.center = 1.0;
  c.initial.width = 0.1;
  c.output_stride = 1.0;
  const auto ts = run(c);
  const auto rep = high_moment_check(ts, ts.exponents.high, spec);
  CHECK(rep.verdict.pass);
  CHECK(rep.sup < 1e3);
}

TEST_CASE("gelation scan verdicts") {
  SUBCASE("losses that vanish with j") {
    const auto v = scan({synthetic(1e2, 1.0, 1e-3), synthetic(1e3, 1.0, 1e-4),
                         synthetic(1e4, 1.0, 1e-5)});
    CHECK(v.kind == GelationKind::MassConserving);
    CHECK_FALSE(v.t_gel.has_value());
  }
  SUBCASE("losses below the floor count as zero") {
    const auto v = scan({synthetic(1e2, 1.0, 1e-17), synthetic(1e3, 1.0, 0.0),
                         synthetic(1e4, 1.0, 0.0)});
    CHECK(v.kind == GelationKind::MassConserving);
  }
  SUBCASE("zero initial state") {
    const auto v = scan({synthetic(1e2, 0.0, 0.0), synthetic(1e3, 0.0, 0.0),
                         synthetic(1e4, 0.0, 0.0)});
    CHECK(v.kind == GelationKind::MassConserving);
    CHECK(v.loss.back() == 0.0);
  }
  SUBCASE("stable positive loss") {
    const auto v = scan({synthetic(1e2, 2.0, 1.3), synthetic(1e3, 2.0, 1.15),
                         synthetic(1e4, 2.0, 1.07)});
    CHECK(v.kind == GelationKind::Gelling);
    REQUIRE(v.t_gel.has_value());
    CHECK(*v.t_gel == doctest::Approx(0.1));
    CHECK(v.spread == doctest::Approx(0.08 / 1.15));
  }
  SUBCASE("slow decay is inconclusive") {
    const auto v = scan({synthetic(1e2, 1.0, 1e-3), synthetic(1e3, 1.0, 5e-4),
                         synthetic(1e4, 1.0, 2.5e-4)});
    CHECK(v.kind == GelationKind::Inconclusive);
  }
  SUBCASE("doubling j must halve the loss") {
    const auto fast = scan({synthetic(1e2, 1.0, 1e-3), synthetic(2e2, 1.0, 0.5e-3),
                            synthetic(4e2, 1.0, 0.25e-3)});
    CHECK(fast.kind == GelationKind::MassConserving);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(scan({synthetic(1e2, 1.0, 0.0), synthetic(1e3, 1.0, 0.0)}), InsufficientRuns);
    CHECK_THROWS_AS(scan({synthetic(1e3, 1.0, 0.0), synthetic(1e2, 1.0, 0.0),
                          synthetic(1e4, 1.0, 0.0)}),
                    std::invalid_argument);
  }
  const auto j = scan({synthetic(1e2, 2.0, 1.3), synthetic(1e3, 2.0, 1.15),
                       synthetic(1e4, 2.0, 1.07)})
                     .to_json();
  CHECK(j["verdict"] == "Gelling");
}

TEST_CASE("contraction of identical and perturbed runs") {
  const auto spec = validate(CoefficientSpec{});
  auto c = subcritical(2.0);
  c.snapshot_every = 0.25;
  const auto a = run(c);
  const auto b = run(c);
  const auto same = contraction_check(a, b, spec);
  CHECK(same.verdict.pass);
  for (double d : same.D) CHECK(d == 0.0);

  State init = c.initial.build(a.grid);
  std::size_t peak = 0;
  for (std::size_t i = 0; i < init.size(); ++i)
    if (init.density[i] > init.density[peak]) peak = i;
  init.density[peak] *= 1.01;
  const auto p = run(c, init);
  const auto rep = contraction_check(a, p, spec);
  CHECK(rep.verdict.pass);
  CHECK(rep.D.front() > 0.0);
  CHECK(rep.R > 0.0);
  CHECK(rep.t.size() == 9);

  auto other = c;
  other.grid.cells_per_decade = 10;
  CHECK_THROWS_AS(contraction_check(a, run(other), spec), std::invalid_argument);
}

TEST_CASE("weak residual") {
  auto c = subcritical(1.0);
  c.snapshot_every = 0.05;
  c.output_stride = 0.05;
  const auto spec = validate(c.spec);
  const auto g = c.grid.build();
  const RateEvaluator rates(g, spec, c.trunc);
  const auto family = weak_test_functions(0.75);
  CHECK(family.size() == 4);

  const auto zero = run(c, State(g));
  CHECK(weak_residual(zero, rates, family, 1e-12).max_residual == 0.0);

  const auto ts = run(c);
  const auto rep = weak_residual(ts, rates, family, 1e-4);
  CHECK(rep.verdict.pass);
  CHECK(rep.max_residual < 1e-4);
  CHECK(rep.quadrature_error < 1e-5);

  c.snapshot_every = 0.5;
  c.output_stride = 0.5;
  c.t_end = 2.0;
  const auto sparse = weak_residual(run(c), rates, family, 1e-5);
  CHECK(sparse.quadrature_error > 1e-5);
  CHECK(sparse.max_residual > 1e-5);
}

TEST_CASE("running integrals use the trapezoid rule") {
  TimeSeries ts = synthetic(1e2, 1.0, 0.5);
  const auto I = running_integral(ts, 1.0);
  // M1 = 1 - 0.5 t
  CHECK(I.back() == doctest::Approx(1.0 - 0.25));
  CHECK_THROWS_AS(running_integral(ts, 2.0), std::domain_error);
}

}  // TEST_SUITE
