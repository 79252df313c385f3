#include "coagfrag/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "coagfrag/summation.hpp"

namespace coagfrag {

SizeGrid::SizeGrid(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 2) throw std::domain_error("grid needs at least one cell");
  if (!(edges_.front() > 0.0)) throw std::domain_error("grid edges must be positive");
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (!(edges_[i] > edges_[i - 1]) || !std::isfinite(edges_[i]))
      throw std::domain_error("grid edges must be finite and strictly increasing");
  }
  const std::size_t n = edges_.size() - 1;
  pivots_.resize(n);
  widths_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    pivots_[i] = 0.5 * (edges_[i] + edges_[i + 1]);
    widths_[i] = edges_[i + 1] - edges_[i];
  }
}

SizeGrid SizeGrid::from_edges(std::vector<double> edges) { return SizeGrid(std::move(edges)); }

GridPtr make_grid(double x_min, double x_max, std::size_t n_cells, GridKind kind) {
  if (!(x_min > 0.0)) throw std::domain_error("make_grid: x_min must be positive");
  if (!(x_max > x_min) || !std::isfinite(x_max))
    throw std::domain_error("make_grid: x_max must exceed x_min");
  if (n_cells < 2) throw std::domain_error("make_grid: need at least two cells");
  std::vector<double> edges(n_cells + 1);
  const double n = static_cast<double>(n_cells);
  for (std::size_t i = 0; i <= n_cells; ++i) {
    const double s = static_cast<double>(i) / n;
    edges[i] = kind == GridKind::Geometric ? x_min * std::pow(x_max / x_min, s)
                                           : x_min + (x_max - x_min) * s;
  }
  edges.front() = x_min;
  edges.back() = x_max;
  return std::make_shared<const SizeGrid>(SizeGrid::from_edges(std::move(edges)));
}

std::size_t cells_for_decades(double x_min, double x_max, double cells_per_decade) {
  if (!(cells_per_decade > 0.0)) throw std::domain_error("cells per decade must be positive");
  const double n = std::round(cells_per_decade * std::log10(x_max / x_min));
  return static_cast<std::size_t>(std::max(2.0, n));
}

State::State(GridPtr g, std::vector<double> f, double t)
    : grid(std::move(g)), density(std::move(f)), time(t) {
  if (!grid || density.size() != grid->size())
    throw std::invalid_argument("State: density size does not match grid");
}

bool State::is_nonnegative() const noexcept {
  return std::all_of(density.begin(), density.end(), [](double v) { return v >= 0.0; });
}

bool State::is_finite() const noexcept {
  return std::all_of(density.begin(), density.end(), [](double v) { return std::isfinite(v); });
}

double MomentReport::at(double m) const {
  auto it = moments.find(m);
  if (it == moments.end()) throw std::out_of_range("moment of order " + std::to_string(m) + " not tracked");
  return it->second;
}

double moment(const State& state, double m) {
  const auto& g = *state.grid;
  CompensatedSum acc;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state.density[i] == 0.0) continue;
    acc += std::pow(g.pivot(i), m) * state.density[i] * g.width(i);
  }
  return acc.value();
}

double log_mass(const State& state) {
  const auto& g = *state.grid;
  CompensatedSum acc;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double x = g.pivot(i);
    acc += x * std::abs(std::log(x)) * state.density[i] * g.width(i);
  }
  return acc.value();
}

MomentReport moments(const State& state, std::span<const double> exponents) {
  MomentReport r;
  for (double m : exponents) r.moments.emplace(m, moment(state, m));
  r.log_mass = log_mass(state);
  return r;
}

State project(const DensityFn& fin, const GridPtr& grid, double rel_tol,
              std::span<const double> breaks) {
  using boost::math::quadrature::gauss_kronrod;
  State out(grid, 0.0);
  std::vector<double> sorted(breaks.begin(), breaks.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> pieces;
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const double lo = grid->lower(i);
    const double hi = grid->upper(i);
    pieces.assign({lo});
    for (auto it = std::upper_bound(sorted.begin(), sorted.end(), lo);
         it != sorted.end() && *it < hi; ++it)
      pieces.push_back(*it);
    pieces.push_back(hi);

    double total = 0.0;
    for (std::size_t p = 0; p + 1 < pieces.size(); ++p) {
      double err = 0.0;
      double l1 = 0.0;
      // Integrate over the unit interval; Boost's error estimate is unreliable
      // on short intervals far from the origin.
      const double a = pieces[p];
      const double w = pieces[p + 1] - a;
      auto g = [&](double u) { return fin(a + u * w); };
      const double v = gauss_kronrod<double, 31>::integrate(g, 0.0, 1.0, 20, 0.1 * rel_tol, &err, &l1);
      if (!std::isfinite(v) || err > rel_tol * l1 + 1e-280)
        throw QuadratureFailure("project: quadrature did not converge on cell " +
                                std::to_string(i));
      total += w * v;
    }
    out.density[i] = total / grid->width(i);
  }
  return out;
}

State scale_to_mass(State state, double mass) {
  const double current = moment(state, 1.0);
  if (current == 0.0) {
    if (mass == 0.0) return state;
    throw std::domain_error("scale_to_mass: state has zero mass");
  }
  const double factor = mass / current;
  for (double& v : state.density) v *= factor;
  return state;
}

DensityFn exponential_profile(double scale) {
  if (!(scale > 0.0)) throw std::domain_error("exponential profile: scale must be positive");
  return [scale](double x) { return std::exp(-x / scale); };
}

DensityFn smoothed_monodisperse_profile(double center, double width) {
  if (!(center > 0.0) || !(width > 0.0))
    throw std::domain_error("monodisperse profile: center and width must be positive");
  return [center, width](double x) {
    const double u = (x - center) / width;
    return std::exp(-0.5 * u * u);
  };
}

DensityFn power_law_cutoff_profile(double exponent, double cutoff) {
  if (!(cutoff > 0.0)) throw std::domain_error("power-law profile: cutoff must be positive");
  return [exponent, cutoff](double x) { return std::pow(x, -exponent) * std::exp(-x / cutoff); };
}

double TabulatedProfile::operator()(double size) const {
  if (x.empty() || size < x.front() || size > x.back()) return 0.0;
  auto it = std::upper_bound(x.begin(), x.end(), size);
  if (it == x.end()) return f.back();
  const std::size_t k = static_cast<std::size_t>(it - x.begin());
  const double t = (size - x[k - 1]) / (x[k] - x[k - 1]);
  return f[k - 1] + t * (f[k] - f[k - 1]);
}

TabulatedProfile read_tabulated_profile(std::istream& in) {
  TabulatedProfile p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double xv = 0.0;
    double fv = 0.0;
    if (!(ls >> xv)) continue;
    std::string rest;
    if (!(ls >> fv) || (ls >> rest))
      throw std::runtime_error("tabulated profile: line " + std::to_string(lineno) +
                               " must hold exactly two numbers");
    if (!std::isfinite(xv) || !std::isfinite(fv) || !(xv > 0.0) || fv < 0.0)
      throw std::runtime_error("tabulated profile: invalid values on line " +
                               std::to_string(lineno));
    if (!p.x.empty() && !(xv > p.x.back()))
      throw std::runtime_error("tabulated profile: sizes must be strictly increasing (line " +
                               std::to_string(lineno) + ")");
    p.x.push_back(xv);
    p.f.push_back(fv);
  }
  if (p.x.size() < 2) throw std::runtime_error("tabulated profile: need at least two rows");
  return p;
}

TabulatedProfile load_tabulated_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_tabulated_profile(in);
}

State transfer(const State& state, const GridPtr& target) {
  const auto& src = *state.grid;
  State out(target, state.time);
  std::size_t s = 0;
  for (std::size_t t = 0; t < target->size(); ++t) {
    const double lo = target->lower(t);
    const double hi = target->upper(t);
    while (s < src.size() && src.upper(s) <= lo) ++s;
    double acc = 0.0;
    for (std::size_t k = s; k < src.size() && src.lower(k) < hi; ++k) {
      const double overlap = std::min(hi, src.upper(k)) - std::max(lo, src.lower(k));
      if (overlap > 0.0) acc += state.density[k] * overlap;
    }
    out.density[t] = acc / target->width(t);
  }
  return out;
}

double relative_l1(const State& f, const State& g, double weight_exponent) {
  if (!(*f.grid == *g.grid)) throw std::invalid_argument("relative_l1: grid mismatch");
  CompensatedSum diff;
  CompensatedSum ref;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double w = std::pow(f.grid->pivot(i), weight_exponent) * f.grid->width(i);
    diff += std::abs(f.density[i] - g.density[i]) * w;
    ref += std::abs(g.density[i]) * w;
  }
  return diff.value() / ref.value();
}

}  // namespace coagfrag
