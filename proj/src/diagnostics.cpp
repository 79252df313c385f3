#include "coagfrag/diagnostics.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

#include "coagfrag/summation.hpp"

namespace coagfrag {

namespace {

constexpr double kWindowSlack = 1e-12;

double tracked(const Record& r, double m) {
  auto it = r.moments.moments.find(m);
  if (it == r.moments.moments.end()) {
    std::ostringstream os;
    os << "moment of order " << m << " is not tracked in the time series";
    throw std::domain_error(os.str());
  }
  return it->second;
}

void require_records(const TimeSeries& ts) {
  if (ts.records.empty()) throw std::invalid_argument("time series has no records");
}

// Falls back to the snapshot when the order was not recorded.
std::optional<double> tracked_or_snapshot(const Record& r, double m) {
  auto it = r.moments.moments.find(m);
  if (it != r.moments.moments.end()) return it->second;
  if (r.snapshot) return moment(*r.snapshot, m);
  return std::nullopt;
}

double margin(double bound, double value) {
  const double scale = std::abs(bound);
  return scale > 0.0 ? (bound - value) / scale : (value <= 0.0 ? 0.0 : -HUGE_VAL);
}

void track_worst(Verdict& v, double m, double t) {
  if (m < v.worst_margin) {
    v.worst_margin = m;
    v.worst_time = t;
  }
}

double value_at(const TimeSeries& ts, double t) {
  const auto& r = ts.records;
  auto it = std::lower_bound(r.begin(), r.end(), t,
                             [](const Record& rec, double v) { return rec.t < v; });
  if (it == r.end()) return r.back().cum_trunc_loss;
  if (it->t == t || it == r.begin()) return it->cum_trunc_loss;
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double w = (t - lo.t) / (hi.t - lo.t);
  return lo.cum_trunc_loss + w * (hi.cum_trunc_loss - lo.cum_trunc_loss);
}

}  // namespace

nlohmann::json Verdict::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["pass"] = pass;
  j["worst_margin"] = std::isfinite(worst_margin) ? nlohmann::json(worst_margin) : nlohmann::json();
  j["worst_time"] = worst_time;
  if (!detail.empty()) j["detail"] = detail;
  return j;
}

Verdict Verdict::from_json(const nlohmann::json& j) {
  Verdict v;
  v.name = j.at("name").get<std::string>();
  v.pass = j.at("pass").get<bool>();
  v.worst_margin = j.at("worst_margin").is_null() ? HUGE_VAL : j.at("worst_margin").get<double>();
  v.worst_time = j.at("worst_time").get<double>();
  if (j.contains("detail")) v.detail = j.at("detail").get<std::string>();
  return v;
}

double sigma_of(const TimeSeries& ts) {
  require_records(ts);
  const auto& r = ts.front();
  const auto& e = ts.exponents;
  return sigma_lower_bound(tracked(r, e.m0), tracked(r, 1.0), tracked(r, e.m1),
                           r.moments.log_mass, e.m1);
}

std::vector<double> running_integral(const TimeSeries& ts, double m) {
  require_records(ts);
  std::vector<double> out(ts.records.size(), 0.0);
  CompensatedSum acc;
  for (std::size_t k = 1; k < ts.records.size(); ++k) {
    const auto& a = ts.records[k - 1];
    const auto& b = ts.records[k];
    acc += 0.5 * (b.t - a.t) * (tracked(a, m) + tracked(b, m));
    out[k] = acc.value();
  }
  return out;
}

LyapunovReport lyapunov_check(const TimeSeries& ts, double m, const ValidatedSpec& spec,
                              double rho) {
  require_records(ts);
  const double m1 = ts.exponents.m1;
  if (!(m >= m1 - kWindowSlack && m < 1.0))
    throw std::domain_error("lyapunov_check: m must lie in [m1, 1)");
  if (!(rho > 0.0 && rho < rho_star(spec)))
    throw std::domain_error("lyapunov_check: rho must lie in (0, rho_star)");

  LyapunovReport rep;
  rep.m = m;
  rep.rho = rho;
  rep.delta_rho = delta_rho(spec, rho);
  rep.c1 = lemma_c1(spec, m, rho);
  rep.sigma = sigma_of(ts);
  const double coef = 1.0 / (std::numbers::e * (1.0 - m));
  const auto& r0 = ts.front();
  rep.L0 = r0.moments.log_mass + 2.0 * coef * tracked(r0, m);
  const double slack = 10.0 * ts.rel_tol * std::abs(rep.L0);
  const double log_j = std::log(ts.j);
  const auto int_ml = running_integral(ts, ts.exponents.lambda);
  const double c1_m1 = lemma_c1(spec, m1, rho);

  rep.verdict.name = "lyapunov";
  rep.verdict.pass = true;
  rep.integral_bound.name = "lyapunov_integral_bound";
  rep.integral_bound.pass = true;
  for (std::size_t k = 0; k < ts.records.size(); ++k) {
    const auto& r = ts.records[k];
    const double L = r.moments.log_mass + coef * tracked(r, m);
    const double lhs = L + rep.delta_rho * int_ml[k] + log_j * r.cum_trunc_loss;
    const double rhs = rep.L0 + rep.c1 * r.t;
    rep.t.push_back(r.t);
    rep.L.push_back(L);
    rep.int_M_lambda.push_back(int_ml[k]);
    rep.log_j_flux.push_back(log_j * r.cum_trunc_loss);
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    if (!std::isfinite(lhs)) {
      rep.verdict.pass = false;
      if (!rep.first_violation) rep.first_violation = r.t;
      track_worst(rep.verdict, -HUGE_VAL, r.t);
      continue;
    }
    track_worst(rep.verdict, margin(rhs + slack, lhs), r.t);
    if (lhs > rhs + slack) {
      rep.verdict.pass = false;
      if (!rep.first_violation) rep.first_violation = r.t;
    }
    const double ib = (rep.sigma + c1_m1 * r.t) / rep.delta_rho;
    track_worst(rep.integral_bound, margin(ib, int_ml[k]), r.t);
    if (int_ml[k] > ib) rep.integral_bound.pass = false;
  }
  std::ostringstream os;
  os.precision(6);
  os << "m=" << m << " C1=" << rep.c1 << " delta_rho=" << rep.delta_rho << " L0=" << rep.L0;
  rep.verdict.detail = os.str();
  return rep;
}

double lemma_c2(const ValidatedSpec& spec, double m, double sigma, double c1_m1, double rho) {
  const double lambda = spec.lambda();
  return (sigma + c1_m1) / delta_rho(spec, rho) *
         std::pow(spec.a0() * frag_moment(spec, m, 1.0), (lambda - m) / (lambda - 1.0));
}

Verdict low_moment_check(const TimeSeries& ts, double m, const ValidatedSpec& spec) {
  require_records(ts);
  const double m1 = ts.exponents.m1;
  if (!(m > -spec.nu() - 1.0) || !(m < m1))
    throw std::domain_error("low_moment_check: m must lie in (-nu-1, m1)");
  const double rho = tracked(ts.front(), 1.0);
  if (!(rho > 0.0 && rho < rho_star(spec)))
    throw std::domain_error("low_moment_check: initial mass must lie in (0, rho_star)");
  const double lambda = spec.lambda();
  const double c2 = lemma_c2(spec, m, sigma_of(ts), lemma_c1(spec, m1, rho), rho);
  const double base = std::max(tracked(ts.front(), m), c2);
  const double q = (lambda - m) / (lambda - 1.0);

  Verdict v;
  v.name = "low_moment";
  v.pass = true;
  for (const auto& r : ts.records) {
    const double bound = base * std::pow(2.0 + r.t, q);
    const double value = tracked(r, m);
    track_worst(v, margin(bound, value), r.t);
    if (!(value <= bound)) v.pass = false;
  }
  std::ostringstream os;
  os.precision(6);
  os << "m=" << m << " C2=" << c2;
  v.detail = os.str();
  return v;
}

HighMomentReport high_moment_check(const TimeSeries& ts, double m, const ValidatedSpec& spec) {
  require_records(ts);
  if (!(m > 1.0 + spec.lambda() - spec.alpha()))
    throw std::domain_error("high_moment_check: m must exceed 1 + lambda - alpha");
  HighMomentReport rep;
  rep.m = m;
  rep.verdict.name = "high_moment";
  rep.verdict.pass = true;
  for (const auto& r : ts.records) {
    const double v = tracked(r, m);
    if (!std::isfinite(v)) {
      rep.verdict.pass = false;
      rep.sup = HUGE_VAL;
      rep.sup_time = r.t;
      break;
    }
    if (v > rep.sup) {
      rep.sup = v;
      rep.sup_time = r.t;
    }
  }
  rep.verdict.worst_time = rep.sup_time;
  std::ostringstream os;
  os.precision(9);
  os << "sup M_" << m << " = " << rep.sup;
  rep.verdict.detail = os.str();
  return rep;
}

std::string to_string(GelationKind k) {
  switch (k) {
    case GelationKind::MassConserving:
      return "MassConserving";
    case GelationKind::Gelling:
      return "Gelling";
    case GelationKind::Inconclusive:
      return "Inconclusive";
  }
  return "?";
}

nlohmann::json GelationVerdict::to_json() const {
  nlohmann::json j;
  j["verdict"] = to_string(kind);
  j["t_gel"] = t_gel ? nlohmann::json(*t_gel) : nlohmann::json();
  j["j"] = this->j;
  j["loss"] = loss;
  j["time"] = time;
  j["mass"] = mass;
  j["spread"] = spread;
  return j;
}

GelationVerdict gelation_scan(const std::vector<const TimeSeries*>& runs,
                              const GelationRules& rules) {
  if (runs.size() < 3) throw InsufficientRuns("gelation_scan needs at least three runs");
  GelationVerdict v;
  v.time = HUGE_VAL;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    require_records(*runs[k]);
    if (k > 0 && !(runs[k]->j > runs[k - 1]->j))
      throw std::invalid_argument("gelation_scan: j must be strictly increasing");
    v.time = std::min(v.time, runs[k]->back().t);
  }
  const auto& top = *runs.back();
  v.mass = tracked(top.front(), 1.0);
  for (const auto* r : runs) {
    v.j.push_back(r->j);
    v.loss.push_back(value_at(*r, v.time));
  }
  for (const auto& rec : top.records) {
    if (rec.cum_trunc_loss > rules.gel_fraction * v.mass) {
      v.t_gel = rec.t;
      break;
    }
  }
  const std::size_t n = v.loss.size();
  const double hi = v.loss[n - 1];
  const double lo = v.loss[n - 2];
  const double biggest = std::max(hi, lo);
  v.spread = biggest > 0.0 ? std::abs(hi - lo) / biggest : 0.0;
  if (v.mass <= 0.0) {
    v.kind = GelationKind::MassConserving;
    return v;
  }
  const double floor = rules.zero_floor * v.mass;
  if (hi > rules.gel_fraction * v.mass && lo > floor && v.spread < rules.spread_max) {
    v.kind = GelationKind::Gelling;
    return v;
  }
  bool decays = true;
  for (std::size_t k = 1; k < n; ++k) {
    if (v.loss[k] <= floor) continue;
    const double doublings = std::log2(v.j[k] / v.j[k - 1]);
    if (!(v.loss[k] <= std::pow(rules.decay_ratio_max, doublings) * v.loss[k - 1])) decays = false;
  }
  v.kind = decays ? GelationKind::MassConserving : GelationKind::Inconclusive;
  return v;
}

double weighted_distance(const State& a, const State& b, double alpha, double lambda) {
  if (!(*a.grid == *b.grid)) throw std::invalid_argument("weighted_distance: grid mismatch");
  CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.grid->pivot(i);
    const double d = std::abs(a.density[i] - b.density[i]);
    if (d != 0.0) acc += (std::pow(x, alpha) + std::pow(x, lambda)) * d * a.grid->width(i);
  }
  return acc.value();
}

ContractionReport contraction_check(const TimeSeries& a, const TimeSeries& b,
                                    const ValidatedSpec& spec, double factor) {
  require_records(a);
  require_records(b);
  if (!a.grid || !b.grid || !(*a.grid == *b.grid))
    throw std::invalid_argument("contraction_check: grid mismatch");
  const double alpha = spec.alpha();
  const double lambda = spec.lambda();
  const double high = 2.0 * lambda - alpha;

  std::vector<std::pair<const Record*, const Record*>> pairs;
  const auto sa = a.snapshots();
  const auto sb = b.snapshots();
  std::size_t q = 0;
  for (const auto* ra : sa) {
    while (q < sb.size() && sb[q]->t < ra->t) ++q;
    if (q < sb.size() && sb[q]->t == ra->t) pairs.emplace_back(ra, sb[q]);
  }
  if (pairs.empty() || pairs.front().first->t != 0.0)
    throw std::invalid_argument("contraction_check: no common snapshots starting at t = 0");
  const double T = pairs.back().first->t;

  ContractionReport rep;
  for (const auto* ts : {&a, &b}) {
    for (const auto& r : ts->records) {
      if (r.t > T) break;
      if (auto v = tracked_or_snapshot(r, alpha)) rep.sup_M_alpha = std::max(rep.sup_M_alpha, *v);
      if (auto v = tracked_or_snapshot(r, high)) rep.sup_M_high = std::max(rep.sup_M_high, *v);
    }
  }
  rep.R = 9.0 * spec.K0() * (rep.sup_M_alpha + rep.sup_M_high) +
          spec.a0() * frag_moment(spec, alpha, 1.0);

  const double d0 = weighted_distance(*pairs.front().first->snapshot,
                                      *pairs.front().second->snapshot, alpha, lambda);
  State zero(a.grid);
  const double floor =
      d0 > 0.0 ? 0.0
               : a.rel_tol * weighted_distance(*pairs.front().first->snapshot, zero, alpha, lambda);
  rep.verdict.name = "contraction";
  rep.verdict.pass = true;
  for (const auto& [ra, rb] : pairs) {
    const double d = weighted_distance(*ra->snapshot, *rb->snapshot, alpha, lambda);
    const double bound = d0 > 0.0 ? factor * d0 * std::exp(rep.R * ra->t) : floor;
    rep.t.push_back(ra->t);
    rep.D.push_back(d);
    rep.bound.push_back(bound);
    track_worst(rep.verdict, bound > 0.0 ? margin(bound, d) : (d == 0.0 ? 0.0 : -HUGE_VAL),
                ra->t);
    if (!(d <= bound)) rep.verdict.pass = false;
  }
  std::ostringstream os;
  os.precision(6);
  os << "R=" << rep.R << " D0=" << d0 << " T=" << T;
  rep.verdict.detail = os.str();
  return rep;
}

std::vector<TestFunction> weak_test_functions(double m1) {
  std::vector<TestFunction> out;
  for (double R : {1.0, 10.0, 100.0}) {
    std::ostringstream os;
    os << "min(x," << R << ")";
    out.push_back({os.str(), [R](double x) { return std::min(x, R); }});
  }
  const double cap = std::pow(100.0, m1);
  out.push_back({"capped x^m1", [m1, cap](double x) {
                   const double p = std::pow(x, m1);
                   return p / (1.0 + p / cap);
                 }});
  return out;
}

WeakResidualReport weak_residual(const TimeSeries& ts, const RateEvaluator& rates,
                                 const std::vector<TestFunction>& family, double tolerance) {
  const auto snaps = ts.snapshots();
  if (snaps.size() < 2) throw std::invalid_argument("weak_residual: need at least two snapshots");
  const auto& g = rates.grid();
  double sigma = sigma_of(ts);
  if (!(sigma > 0.0)) sigma = 1.0;

  WeakResidualReport rep;
  rep.verdict.name = "weak_residual";
  for (const auto& fn : family) {
    double prev_sum = 0.0;
    double prev_rate = 0.0;
    std::vector<double> rate_at(snaps.size());
    for (std::size_t k = 0; k < snaps.size(); ++k) {
      const State& s = *snaps[k]->snapshot;
      CompensatedSum acc;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (s.density[i] != 0.0) acc += fn.theta(g.pivot(i)) * s.number(i);
      const auto terms = weak_form_terms(s, rates, fn.theta);
      const double rate = terms.coag_term + terms.frag_term;
      if (k > 0) {
        const double dt = snaps[k]->t - snaps[k - 1]->t;
        const double res = std::abs((acc.value() - prev_sum) - 0.5 * dt * (prev_rate + rate)) / sigma;
        if (res > rep.max_residual) {
          rep.max_residual = res;
          rep.worst_function = fn.name;
          rep.worst_time = snaps[k]->t;
        }
      }
      prev_sum = acc.value();
      prev_rate = rate;
      rate_at[k] = rate;
    }
    // Trapezoid error h^3 |r''| / 12, with r'' from divided differences.
    for (std::size_t k = 1; k + 1 < snaps.size(); ++k) {
      const double h1 = snaps[k]->t - snaps[k - 1]->t;
      const double h2 = snaps[k + 1]->t - snaps[k]->t;
      const double r2 = 2.0 * ((rate_at[k + 1] - rate_at[k]) / h2 - (rate_at[k] - rate_at[k - 1]) / h1) /
                        (h1 + h2);
      const double h = std::max(h1, h2);
      rep.quadrature_error = std::max(rep.quadrature_error, h * h * h * std::abs(r2) / 12.0 / sigma);
    }
  }
  rep.verdict.pass = rep.max_residual <= tolerance;
  rep.verdict.worst_margin = margin(tolerance, rep.max_residual);
  rep.verdict.worst_time = rep.worst_time;
  rep.verdict.detail = rep.worst_function.empty() ? "" : "worst test function " + rep.worst_function;
  return rep;
}

}  // namespace coagfrag
