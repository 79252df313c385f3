#include "coagfrag/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "coagfrag/summation.hpp"

namespace coagfrag {

double TruncationSpec::threshold(const SizeGrid& grid) const {
  if (mode == TruncationMode::None) return grid.x_max();
  if (!(j > 0.0)) throw std::domain_error("truncation threshold j must be positive");
  if (j > grid.x_max()) throw std::domain_error("truncation threshold j exceeds the grid");
  return j;
}

std::size_t TruncationSpec::active_cells(const SizeGrid& grid) const {
  const double t = threshold(grid);
  const auto pivots = grid.pivots();
  return static_cast<std::size_t>(std::upper_bound(pivots.begin(), pivots.end(), t) -
                                  pivots.begin());
}

// ---------------------------------------------------------------------------
// Coagulation

CoagulationOperator::CoagulationOperator(GridPtr grid, const ValidatedSpec& spec,
                                         TruncationSpec trunc)
    : grid_(std::move(grid)), K0_(spec.K0()) {
  const auto& g = *grid_;
  n_active_ = trunc.active_cells(g);
  const std::size_t n = n_active_;
  const auto p = g.pivots();
  xa_.resize(n);
  xb_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    xa_[i] = std::pow(p[i], spec.alpha());
    xb_[i] = std::pow(p[i], spec.lambda() - spec.alpha());
  }
  inv_gap_.resize(n > 0 ? n - 1 : 0);
  for (std::size_t l = 0; l + 1 < n; ++l) inv_gap_[l] = 1.0 / (p[l + 1] - p[l]);
  first_lost_.resize(n);
  if (n == 0) return;
  const double last = p[n - 1];
  std::size_t k = n;
  for (std::size_t i = 0; i < n; ++i) {
    // p_i + p_k is increasing in both indices, so the cut moves left.
    while (k > i && p[i] + p[k - 1] > last) --k;
    first_lost_[i] = std::max(k, i);
  }
}

std::size_t CoagulationOperator::lost_pairs() const noexcept {
  std::size_t c = 0;
  for (std::size_t i = 0; i < n_active_; ++i) c += n_active_ - first_lost_[i];
  return c;
}

void CoagulationOperator::apply(std::span<const double> number, std::span<double> dndt,
                                StepLedger& ledger, std::span<double> per_capita_loss) const {
  const auto& g = *grid_;
  const std::size_t n = n_active_;
  const auto p = g.pivots();
  std::fill(dndt.begin(), dndt.end(), 0.0);
  if (!per_capita_loss.empty()) std::fill(per_capita_loss.begin(), per_capita_loss.end(), 0.0);

  // Occupied prefix of the active cells.
  std::size_t hi = n;
  while (hi > 0 && number[hi - 1] == 0.0) --hi;

  double sum_a = 0.0;
  double sum_b = 0.0;
  for (std::size_t k = 0; k < hi; ++k) {
    sum_a += xa_[k] * number[k];
    sum_b += xb_[k] * number[k];
  }
  CompensatedSum loss_mass;
  for (std::size_t i = 0; i < hi; ++i) {
    const double s = K0_ * (xa_[i] * sum_b + xb_[i] * sum_a);
    if (!per_capita_loss.empty()) per_capita_loss[i] = s;
    const double loss = number[i] * s;
    dndt[i] = -loss;
    loss_mass += p[i] * loss;
  }

  std::vector<double> gain(n + 1, 0.0);
  CompensatedSum flux;
  for (std::size_t i = 0; i < hi; ++i) {
    const double ni = number[i];
    if (ni == 0.0) continue;
    const double ai = K0_ * xa_[i] * ni;
    const double bi = K0_ * xb_[i] * ni;
    const std::size_t cut = std::min(first_lost_[i], hi);
    std::size_t l = i;
    for (std::size_t k = i; k < cut; ++k) {
      const double nk = number[k];
      if (nk == 0.0) continue;
      double r = (ai * xb_[k] + bi * xa_[k]) * nk;
      if (k == i) r *= 0.5;
      const double v = p[i] + p[k];
      if (l < k) l = k;
      while (l + 1 < n && p[l + 1] <= v) ++l;
      if (l + 1 == n) {
        gain[l] += r;
      } else {
        const double eta = (p[l + 1] - v) * inv_gap_[l];
        gain[l] += r * eta;
        gain[l + 1] += r - r * eta;
      }
    }
    double lost = 0.0;
    for (std::size_t k = std::max(cut, i); k < hi; ++k) {
      double r = (ai * xb_[k] + bi * xa_[k]) * number[k];
      if (k == i) r *= 0.5;
      lost += r * (p[i] + p[k]);
    }
    flux += lost;
  }

  CompensatedSum gain_mass;
  for (std::size_t t = 0; t < n; ++t) {
    dndt[t] += gain[t];
    gain_mass += p[t] * gain[t];
  }
  ledger.coag_gain_mass += gain_mass.value();
  ledger.coag_loss_mass += loss_mass.value();
  ledger.coag_mass_flux_out += flux.value();
}

double CoagulationOperator::boundary_term(std::span<const double> number,
                                          const std::function<double(double)>& theta) const {
  const auto p = grid_->pivots();
  CompensatedSum acc;
  for (std::size_t i = 0; i < n_active_; ++i) {
    if (number[i] == 0.0) continue;
    for (std::size_t k = first_lost_[i]; k < n_active_; ++k) {
      if (number[k] == 0.0) continue;
      double r = kernel(i, k) * number[i] * number[k];
      if (k == i) r *= 0.5;
      acc += r * theta(p[i] + p[k]);
    }
  }
  return acc.value();
}

// ---------------------------------------------------------------------------
// Fragmentation

FragmentationOperator::FragmentationOperator(GridPtr grid, const ValidatedSpec& spec,
                                             TruncationSpec trunc)
    : grid_(std::move(grid)) {
  const auto& g = *grid_;
  n_active_ = trunc.active_cells(g);
  const std::size_t n = n_active_;
  const auto p = g.pivots();
  const auto& daughter = spec.get().daughter;

  rate_.assign(g.size(), 0.0);
  column_offset_.resize(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) column_offset_[k + 1] = column_offset_[k] + k + 1;
  weights_.assign(column_offset_[n], 0.0);

  for (std::size_t k = 0; k < n; ++k) {
    rate_[k] = eval_a(spec.get(), p[k]);
    const double y = p[k];
    // int_a^b x^q b(x, y) dx = y^q int_{a/y}^{b/y} z^q B(z) dz
    auto D = [&](double q, double a, double b) {
      const double za = std::min(a / y, 1.0);
      const double zb = std::min(b / y, 1.0);
      return (q == 0.0 ? 1.0 : y) * daughter_partial_moment(daughter, q, za, zb);
    };
    double* w = &weights_[column_offset_[k]];
    for (std::size_t i = 0; i <= k; ++i) {
      double beta = 0.0;
      if (i == 0) {
        // Below the first pivot only mass can be matched.
        beta += D(1.0, 0.0, p[0]) / p[0];
      } else {
        const double h = p[i] - p[i - 1];
        beta += (D(1.0, p[i - 1], p[i]) - p[i - 1] * D(0.0, p[i - 1], p[i])) / h;
      }
      if (i < k) {
        const double h = p[i + 1] - p[i];
        beta += (p[i + 1] * D(0.0, p[i], p[i + 1]) - D(1.0, p[i], p[i + 1])) / h;
      }
      w[i] = beta;
    }
    CompensatedSum mass;
    for (std::size_t i = 0; i <= k; ++i) mass += p[i] * w[i];
    const double s = y / mass.value();
    max_renorm_ = std::max(max_renorm_, std::abs(s - 1.0));
    for (std::size_t i = 0; i <= k; ++i) w[i] *= s;
  }
}

void FragmentationOperator::apply(std::span<const double> number, std::span<double> dndt,
                                  StepLedger& ledger, std::span<double> per_capita_loss) const {
  const auto p = grid_->pivots();
  std::fill(dndt.begin(), dndt.end(), 0.0);
  CompensatedSum loss_mass;
  for (std::size_t k = 0; k < n_active_; ++k) {
    const double c = rate_[k] * number[k];
    if (c == 0.0) continue;
    dndt[k] -= c;
    loss_mass += p[k] * c;
    const double* w = &weights_[column_offset_[k]];
    for (std::size_t i = 0; i <= k; ++i) dndt[i] += c * w[i];
  }
  if (!per_capita_loss.empty())
    for (std::size_t k = 0; k < per_capita_loss.size(); ++k) per_capita_loss[k] = rate_[k];

  CompensatedSum net;
  for (std::size_t i = 0; i < n_active_; ++i) net += p[i] * dndt[i];
  ledger.frag_mass_residual += net.value();
  ledger.frag_loss_mass += loss_mass.value();
  ledger.frag_gain_mass += loss_mass.value() + net.value();
}

// ---------------------------------------------------------------------------

RateEvaluator::RateEvaluator(GridPtr grid, const ValidatedSpec& spec, TruncationSpec trunc,
                             bool coagulation, bool fragmentation)
    : grid_(grid), scratch_(grid->size()), scratch_loss_(grid->size()) {
  if (coagulation) coag_.emplace(grid, spec, trunc);
  if (fragmentation) frag_.emplace(grid, spec, trunc);
}

void RateEvaluator::number_rates(std::span<const double> number, std::span<double> dndt,
                                 StepLedger& ledger, std::span<double> per_capita_loss) const {
  std::fill(dndt.begin(), dndt.end(), 0.0);
  if (!per_capita_loss.empty()) std::fill(per_capita_loss.begin(), per_capita_loss.end(), 0.0);
  if (coag_) coag_->apply(number, dndt, ledger, per_capita_loss);
  if (frag_) {
    const std::span<double> loss =
        per_capita_loss.empty() ? std::span<double>{} : std::span<double>(scratch_loss_);
    frag_->apply(number, scratch_, ledger, loss);
    for (std::size_t i = 0; i < dndt.size(); ++i) dndt[i] += scratch_[i];
    if (!per_capita_loss.empty())
      for (std::size_t i = 0; i < dndt.size(); ++i) per_capita_loss[i] += scratch_loss_[i];
  }
}

namespace {

std::vector<double> to_numbers(const State& state) {
  std::vector<double> n(state.size());
  for (std::size_t i = 0; i < n.size(); ++i) n[i] = state.number(i);
  return n;
}

}  // namespace

RateEvaluation RateEvaluator::evaluate(const State& state) const {
  if (!(*state.grid == *grid_)) throw std::invalid_argument("evaluate: grid mismatch");
  const auto number = to_numbers(state);
  RateEvaluation out;
  out.rhs.assign(number.size(), 0.0);
  number_rates(number, out.rhs, out.ledger);
  for (std::size_t i = 0; i < out.rhs.size(); ++i) out.rhs[i] /= grid_->width(i);
  return out;
}

RateEvaluation coagulation_rhs(const State& state, const ValidatedSpec& spec,
                               TruncationSpec trunc) {
  return RateEvaluator(state.grid, spec, trunc, true, false).evaluate(state);
}

RateEvaluation fragmentation_rhs(const State& state, const ValidatedSpec& spec,
                                 TruncationSpec trunc) {
  return RateEvaluator(state.grid, spec, trunc, false, true).evaluate(state);
}

WeakFormTerms weak_form_terms(const State& state, const RateEvaluator& rates,
                              const std::function<double(double)>& theta) {
  const auto& g = rates.grid();
  const auto number = to_numbers(state);
  std::vector<double> buf(number.size());
  StepLedger ledger;
  WeakFormTerms terms;

  if (rates.coagulation_enabled()) {
    rates.coagulation().apply(number, buf, ledger);
    CompensatedSum acc;
    for (std::size_t i = 0; i < buf.size(); ++i)
      if (buf[i] != 0.0) acc += theta(g.pivot(i)) * buf[i];
    terms.coag_term = acc.value();
    terms.boundary_term = rates.coagulation().boundary_term(number, theta);
  }
  if (rates.fragmentation_enabled()) {
    rates.fragmentation().apply(number, buf, ledger);
    CompensatedSum acc;
    for (std::size_t i = 0; i < buf.size(); ++i)
      if (buf[i] != 0.0) acc += theta(g.pivot(i)) * buf[i];
    terms.frag_term = acc.value();
  }
  return terms;
}

WeakFormTerms weak_form_terms(const State& state, const ValidatedSpec& spec,
                              TruncationSpec trunc, const std::function<double(double)>& theta) {
  return weak_form_terms(state, RateEvaluator(state.grid, spec, trunc), theta);
}

}  // namespace coagfrag
