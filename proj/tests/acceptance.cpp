// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "coagfrag/diagnostics.hpp"
#include "coagfrag/io.hpp"
#include "coagfrag/reference.hpp"

using namespace coagfrag;

namespace {

int failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s  [%s]\n", pass ? "PASS" : "FAIL", id, title.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig canonical(double rho, double j, double cpd, double t_end) {
  RunConfig c;
  c.grid.x_min = 1e-4;
  c.grid.x_max = 1e4;
  c.grid.cells_per_decade = cpd;
  c.initial.mass = rho;
  c.trunc = TruncationSpec::cutoff(j);
  c.t_end = t_end;
  c.output_stride = 0.5;
  return c;
}

std::vector<const TimeSeries*> pointers(const std::vector<TimeSeries>& runs) {
  std::vector<const TimeSeries*> p;
  for (const auto& r : runs) p.push_back(&r);
  return p;
}

const std::vector<double> kJ{1e2, 1e3, 1e4};

void criterion1() {
  const auto spec = validate(CoefficientSpec{});
  const double got = rho_star(spec);
  const double want = 1.0 / (4.0 * std::numbers::ln2);
  report(1, "threshold constant", std::abs(got - want) <= 5e-13 * want,
         fmt("rho_star = %.15f, 1/(4 ln 2) = %.15f", got, want));
}

void criterion2(const std::vector<TimeSeries>& runs) {
  double worst = 0.0;
  for (const auto& ts : runs)
    for (const auto& r : ts.records) worst = std::max(worst, std::abs(r.moments.at(1.0) - 0.2) / 0.2);
  std::string verdict;
  bool conserving = false;
  try {
    const auto v = gelation_scan(pointers(runs));
    conserving = v.kind == GelationKind::MassConserving;
    verdict = to_string(v.kind) + fmt(", losses %.2e %.2e %.2e", v.loss[0], v.loss[1], v.loss[2]);
  } catch (const std::exception& e) {
    verdict = e.what();
  }
  report(2, "mass conservation below threshold", worst <= 5e-3 && conserving,
         fmt("max |M1 - 0.2|/0.2 = %.2e, ", worst) + verdict);
}

void criterion3() {
  std::vector<TimeSeries> runs;
  for (double j : kJ) runs.push_back(run(canonical(2.0, j, 40, 10.0)));
  const auto v = gelation_scan(pointers(runs));
  const double mass = runs.front().front().moments.at(1.0);
  const double loss = runs.back().back().cum_trunc_loss;
  const bool pass = v.kind == GelationKind::Gelling && loss > 0.05 * mass && v.spread < 0.2;
  report(3, "gelation above threshold", pass,
         fmt("%s, loss(t=10, j=1e4) = %.4f of mass %.4f, spread = %.3f", to_string(v.kind).c_str(),
             loss, mass, v.spread));
}

double fragmentation_error(double cpd) {
  RunConfig c;
  c.coagulation = false;
  c.grid.x_min = 1e-8;
  c.grid.x_max = 1e2;
  c.grid.cells_per_decade = cpd;
  c.initial.mass = 1.0;
  c.trunc = TruncationSpec::none();
  c.t_end = 2.0;
  c.output_stride = 1.0;
  const auto ts = run(c);
  const auto exact =
      project([](double x) { return exact_pure_fragmentation(1.0, 2.0, x); }, ts.grid);
  return relative_l1(*ts.back().snapshot, exact);
}

void criterion4() {
  const double e160 = fragmentation_error(160);
  const double e320 = fragmentation_error(320);
  report(4, "pure fragmentation oracle", e160 <= 0.01 && e160 / e320 >= 3.0,
         fmt("L1(160) = %.3e, L1(320) = %.3e, ratio = %.2f", e160, e320, e160 / e320));
}

void criterion5() {
  RunConfig c = canonical(1.0, 0.0, 160, 0.0);
  c.fragmentation = false;
  c.trunc = TruncationSpec::none();
  const auto grid = c.grid.build();
  const double m2 = moment(c.initial.build(grid), 2.0);
  const double t_gel = multiplicative_gel_time(c.spec.K0, m2);
  c.t_end = 0.8 * t_gel;
  c.output_stride = c.t_end / 16.0;
  c.extra_moments = {2.0};
  const auto ts = run(c);
  double worst = 0.0;
  for (const auto& r : ts.records) {
    const double want = multiplicative_M2(c.spec.K0, m2, r.t);
    worst = std::max(worst, std::abs(r.moments.at(2.0) - want) / want);
  }
  report(5, "multiplicative second moment", worst <= 0.02,
         fmt("max relative deviation %.3e up to t = %.4f (t_gel = %.4f)", worst, c.t_end, t_gel));
}

// Randomized property suites, 10^4 cases each.
void criterion6(const std::vector<TimeSeries>& c2_runs) {
  constexpr int kCases = 10000;
  std::mt19937_64 rng(20261017);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * u(rng));
  };
  std::vector<std::string> failed;

  {  // kernel bounds
    int bad = 0;
    for (int n = 0; n < kCases; ++n) {
      CoefficientSpec s;
      s.lambda = 1.0 + 1e-3 + (1.0 - 1e-3) * u(rng);
      const double lo = std::max(0.5, s.lambda - 1.0);
      s.alpha = lo + (0.5 * s.lambda - lo) * u(rng);
      s.K0 = log_uniform(1e-2, 1e2);
      const double x = log_uniform(1e-6, 1e6);
      const double y = log_uniform(1e-6, 1e6);
      const double K = eval_K(s, x, y);
      const double below = 2.0 * s.K0 * std::pow(x * y, 0.5 * s.lambda);
      const double above =
          s.K0 * std::sqrt(x * y) * (std::pow(x, s.lambda - 1.0) + std::pow(y, s.lambda - 1.0));
      if (K < below * (1.0 - 1e-12) || K > above * (1.0 + 1e-12)) ++bad;
    }
    if (bad) failed.push_back(fmt("kernel bounds %d", bad));
  }
  {  // log inequality, with equality on the diagonal
    int bad = 0;
    const double c = 2.0 * std::numbers::ln2;
    for (int n = 0; n < kCases; ++n) {
      const double x = log_uniform(1e-6, 1e6);
      const double y = log_uniform(1e-6, 1e6);
      const double lhs = (x + y) * std::log(x + y);
      const double rhs = x * std::log(x) + y * std::log(y) + c * std::sqrt(x * y);
      const double scale = std::abs(x * std::log(x)) + std::abs(y * std::log(y)) + (x + y);
      if (lhs > rhs + 1e-12 * scale) ++bad;
      const double eq_l = 2.0 * x * std::log(2.0 * x);
      const double eq_r = 2.0 * x * std::log(x) + c * x;
      if (std::abs(eq_l - eq_r) > 1e-12 * (std::abs(eq_l) + x)) ++bad;
    }
    if (bad) failed.push_back(fmt("log inequality %d", bad));
  }
  {  // x ln x between x|ln x| - 2x^m/(e(1-m)) and x|ln x|
    int bad = 0;
    for (int n = 0; n < kCases; ++n) {
      const double x = log_uniform(1e-8, 1e8);
      const double m = 0.999 * u(rng);
      const double a = x * std::abs(std::log(x));
      const double v = x * std::log(x);
      const double low = a - 2.0 * std::pow(x, m) / (std::numbers::e * (1.0 - m));
      const double tol = 1e-12 * (a + std::pow(x, m));
      if (v < low - tol || v > a + tol) ++bad;
    }
    if (bad) failed.push_back(fmt("x ln x bounds %d", bad));
  }
  {  // fragmentation moments: finite exactly on the admissible set
    int bad = 0;
    boost::math::quadrature::tanh_sinh<double> q;
    for (int n = 0; n < kCases; ++n) {
      const double nu = -1.999 + 1.999 * u(rng);
      const double p = 0.5 + 3.5 * u(rng);
      const double m = -1.5 + 4.5 * u(rng);
      const PowerLawDaughter d{nu};
      const double s = m + p * nu;
      const bool admissible = m > -1.0 && p >= 1.0 && s > -1.0;
      if (in_admissible_set(d, m, p) != admissible) {
        ++bad;
        continue;
      }
      const double c = std::pow(nu + 2.0, p);
      if (admissible) {
        if (s + 1.0 < 0.05) continue;  // quadrature cannot resolve the endpoint to 1e-9 here
        const double closed = frag_moment(d, m, p);
        const double quad = q.integrate([&](double z) { return c * std::pow(z, s); }, 0.0, 1.0);
        if (!std::isfinite(closed) || std::abs(closed - quad) > 1e-9 * closed) ++bad;
      } else {
        bool threw = false;
        try {
          (void)frag_moment(d, m, p);
        } catch (const NotInAdmissibleSet&) {
          threw = true;
        }
        if (!threw) ++bad;
        // Where the integrand fails to be integrable at 0, each decade below
        // 1e-6 contributes at least c ln 10.
        if (p >= 1.0 && s <= -1.0) {
          const double piece =
              q.integrate([&](double z) { return c * std::pow(z, s); }, 1e-12, 1e-6);
          if (!(piece >= 0.999 * c * 6.0 * std::numbers::ln10)) ++bad;
        }
      }
    }
    if (bad) failed.push_back(fmt("fragmentation moments %d", bad));
  }
  {  // discrete fragmentation mass neutrality
    int bad = 0;
    int done = 0;
    while (done < kCases) {
      CoefficientSpec s;
      s.lambda = 1.0 + 1e-3 + (1.0 - 1e-3) * u(rng);
      s.alpha = std::max(0.5, s.lambda - 1.0);
      s.a0 = log_uniform(1e-2, 1e2);
      s.daughter = PowerLawDaughter{-1.0 - s.alpha + 0.999 * (1.0 + s.alpha) * u(rng)};
      const auto spec = validate(s);
      const double x_min = log_uniform(1e-6, 1e-2);
      const auto g = make_grid(x_min, x_min * log_uniform(1e3, 1e8), 50 + rng() % 200,
                               GridKind::Geometric);
      const auto trunc = u(rng) < 0.5 ? TruncationSpec::none()
                                      : TruncationSpec::cutoff(g->pivot(g->size() / 2));
      const FragmentationOperator op(g, spec, trunc);
      std::vector<double> N(g->size());
      std::vector<double> dN(g->size());
      for (int k = 0; k < 200 && done < kCases; ++k, ++done) {
        for (double& v : N) v = u(rng) < 0.2 ? 0.0 : std::exp(-30.0 * u(rng));
        std::fill(dN.begin(), dN.end(), 0.0);
        StepLedger ledger;
        op.apply(N, dN, ledger);
        double rate = 0.0;
        double scale = 0.0;
        for (std::size_t i = 0; i < N.size(); ++i) {
          rate += g->pivot(i) * dN[i];
          scale += std::abs(g->pivot(i) * dN[i]);
        }
        if (std::abs(rate) > 1e-13 * scale) ++bad;
      }
    }
    if (bad) failed.push_back(fmt("fragmentation neutrality %d", bad));
  }
  {  // mass ledger along the sub-threshold runs
    int bad = 0;
    double worst = 0.0;
    for (const auto& ts : c2_runs) {
      const double m0 = ts.front().moments.at(1.0);
      for (const auto& r : ts.records) {
        const double e = std::abs(r.moments.at(1.0) + r.cum_trunc_loss + r.cum_dust_loss - m0) / m0;
        worst = std::max(worst, e);
        if (e > 1e-8) ++bad;
      }
    }
    if (bad) failed.push_back(fmt("mass ledger %d (worst %.2e)", bad, worst));
  }

  std::string detail = "6 suites";
  for (const auto& f : failed) detail += "; failed " + f;
  report(6, "property suites", failed.empty(), detail);
}

void criterion7(const std::vector<TimeSeries>& runs) {
  const auto spec = validate(CoefficientSpec{});
  bool pass = true;
  std::string detail;
  for (const auto& ts : runs) {
    const auto rep = lyapunov_check(ts, ts.exponents.m1, spec, 0.2);
    pass = pass && rep.verdict.pass;
    detail += fmt("j=%.0e margin %.3f; ", ts.j, rep.verdict.worst_margin);
  }
  report(7, "Lyapunov trajectory bound", pass, detail + fmt("C1 = %.2f", lemma_c1(spec, 0.75, 0.2)));
}

void criterion8() {
  const auto spec = validate(CoefficientSpec{});
  RunConfig c = canonical(0.2, 1e4, 160, 5.0);
  c.snapshot_every = 0.25;
  const auto a = run(c);
  State init = c.initial.build(a.grid);
  // Perturb the cell carrying the most W-weighted content.
  auto weighted = [&](std::size_t i) {
    const double x = a.grid->pivot(i);
    return (x + x * x) * init.number(i);
  };
  std::size_t peak = 0;
  for (std::size_t i = 0; i < init.size(); ++i)
    if (weighted(i) > weighted(peak)) peak = i;
  init.density[peak] *= 1.01;
  const auto p = run(c, init);
  const auto rep = contraction_check(a, p, spec, 1.05);

  const auto b = run(c);
  std::ostringstream csv_a, csv_b;
  write_csv(csv_a, a);
  write_csv(csv_b, b);
  bool identical = csv_a.str() == csv_b.str() && a.records.size() == b.records.size();
  for (std::size_t k = 0; identical && k < a.records.size(); ++k) {
    const auto& sa = a.records[k].snapshot;
    const auto& sb = b.records[k].snapshot;
    if (sa.has_value() != sb.has_value()) identical = false;
    else if (sa)
      identical = std::memcmp(sa->density.data(), sb->density.data(),
                              sa->size() * sizeof(double)) == 0;
  }
  report(8, "stability and determinism", rep.verdict.pass && identical,
         fmt("D(0) = %.3e, D(5) = %.3e, R = %.3f, worst margin %.3f, bitwise identical: %s",
             rep.D.front(), rep.D.back(), rep.R, rep.verdict.worst_margin,
             identical ? "yes" : "no"));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  auto guarded = [](int id, auto&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      report(id, "aborted", false, e.what());
    }
  };

  guarded(1, criterion1);
  std::vector<TimeSeries> c2_runs;
  guarded(2, [&] {
    for (double j : kJ) c2_runs.push_back(run(canonical(0.2, j, 160, 50.0)));
    criterion2(c2_runs);
  });
  guarded(3, criterion3);
  guarded(4, criterion4);
  guarded(5, criterion5);
  guarded(6, [&] { criterion6(c2_runs); });
  guarded(7, [&] { criterion7(c2_runs); });
  guarded(8, criterion8);

  const double sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s: %d of 8 criteria failed (%.0f s)\n", failures ? "FAIL" : "PASS", failures, sec);
  return failures ? 1 : 0;
}
