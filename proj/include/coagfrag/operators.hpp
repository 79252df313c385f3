#pragma once

// Sectional coagulation and fragmentation operators on a SizeGrid.
//
// Internally everything works with cell numbers N_i = f_i * width_i. Both
// operators redistribute products onto the two bracketing pivots with the
// linear weights that conserve number and mass (fixed pivot), so the discrete
// first moment changes only through the truncation boundary.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "coagfrag/grid.hpp"
#include "coagfrag/kernel.hpp"

namespace coagfrag {

enum class TruncationMode {
  Cutoff,  // K and a vanish once an argument exceeds j
  None,    // j is the upper end of the grid
};

struct TruncationSpec {
  TruncationMode mode = TruncationMode::None;
  double j = 0.0;

  static TruncationSpec cutoff(double j) { return {TruncationMode::Cutoff, j}; }
  static TruncationSpec none() { return {TruncationMode::None, 0.0}; }

  /// Effective threshold on `grid`; throws if j exceeds the grid.
  double threshold(const SizeGrid& grid) const;
  /// Cells with pivot <= threshold interact; they form a prefix of the grid.
  std::size_t active_cells(const SizeGrid& grid) const;
};

/// Mass bookkeeping of one right-hand-side evaluation (mass per unit time).
struct StepLedger {
  /// Mass carried by coagulation events whose product lies beyond the last
  /// active pivot. Always >= 0.
  double coag_mass_flux_out = 0.0;
  /// sum_i xbar_i (dN_i/dt)_frag; zero up to rounding.
  double frag_mass_residual = 0.0;
  double coag_gain_mass = 0.0;
  double coag_loss_mass = 0.0;
  double frag_gain_mass = 0.0;
  double frag_loss_mass = 0.0;
};

class CoagulationOperator {
 public:
  CoagulationOperator(GridPtr grid, const ValidatedSpec& spec, TruncationSpec trunc);

  /// Writes dN/dt into `dndt` (all cells). When `per_capita_loss` is
  /// non-empty it receives sum_k K_ik N_k for every cell.
  void apply(std::span<const double> number, std::span<double> dndt, StepLedger& ledger,
             std::span<double> per_capita_loss = {}) const;

  /// sum over lost pairs of (event rate) * theta(x_i + x_k).
  double boundary_term(std::span<const double> number,
                       const std::function<double(double)>& theta) const;

  std::size_t active_cells() const noexcept { return n_active_; }
  /// Pairs (i <= k) whose product lies beyond the last active pivot.
  std::size_t lost_pairs() const noexcept;
  /// K at two active pivots, evaluated as in apply().
  double kernel(std::size_t i, std::size_t k) const {
    return K0_ * (xa_[i] * xb_[k] + xb_[i] * xa_[k]);
  }

 private:
  GridPtr grid_;
  std::size_t n_active_ = 0;
  double K0_ = 0.0;
  // K(x,y) = K0 (x^alpha y^(lambda-alpha) + x^(lambda-alpha) y^alpha) is a
  // sum of two separable terms, so the loss term costs O(n) and pair
  // products are generated on the fly.
  std::vector<double> xa_;  // pivot^alpha
  std::vector<double> xb_;  // pivot^(lambda-alpha)
  std::vector<double> inv_gap_;  // 1 / (p[l+1] - p[l])
  // For each i, the first k >= i with p_i + p_k beyond the last active pivot.
  std::vector<std::size_t> first_lost_;
};

class FragmentationOperator {
 public:
  FragmentationOperator(GridPtr grid, const ValidatedSpec& spec, TruncationSpec trunc);

  void apply(std::span<const double> number, std::span<double> dndt, StepLedger& ledger,
             std::span<double> per_capita_loss = {}) const;

  /// Daughters deposited on pivot i per breakup of a particle at pivot k
  /// (i <= k < active_cells()).
  double daughter_weight(std::size_t i, std::size_t k) const {
    return weights_[column_offset_[k] + i];
  }
  double rate(std::size_t k) const { return rate_[k]; }
  std::size_t active_cells() const noexcept { return n_active_; }
  /// Largest |s - 1| over the per-parent mass renormalization factors s.
  double max_renormalization() const noexcept { return max_renorm_; }

 private:
  GridPtr grid_;
  std::size_t n_active_ = 0;
  std::vector<double> rate_;
  std::vector<std::size_t> column_offset_;
  std::vector<double> weights_;
  double max_renorm_ = 0.0;
};

/// Per-cell rates in density units plus the ledger of one evaluation.
struct RateEvaluation {
  std::vector<double> rhs;
  StepLedger ledger;
};

/// Coagulation plus fragmentation with either part switchable (test modes).
class RateEvaluator {
 public:
  RateEvaluator(GridPtr grid, const ValidatedSpec& spec, TruncationSpec trunc,
                bool coagulation = true, bool fragmentation = true);

  /// dN/dt for cell numbers; scratch buffers are internal, so one evaluator
  /// must not be shared between threads.
  void number_rates(std::span<const double> number, std::span<double> dndt, StepLedger& ledger,
                    std::span<double> per_capita_loss = {}) const;

  RateEvaluation evaluate(const State& state) const;

  const SizeGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  /// Precondition: the corresponding part is enabled.
  const CoagulationOperator& coagulation() const { return coag_.value(); }
  const FragmentationOperator& fragmentation() const { return frag_.value(); }
  bool coagulation_enabled() const noexcept { return coag_.has_value(); }
  bool fragmentation_enabled() const noexcept { return frag_.has_value(); }

 private:
  GridPtr grid_;
  std::optional<CoagulationOperator> coag_;
  std::optional<FragmentationOperator> frag_;
  mutable std::vector<double> scratch_;
  mutable std::vector<double> scratch_loss_;
};

RateEvaluation coagulation_rhs(const State& state, const ValidatedSpec& spec,
                               TruncationSpec trunc);
RateEvaluation fragmentation_rhs(const State& state, const ValidatedSpec& spec,
                                 TruncationSpec trunc);

/// The three terms of the truncated weak identity for a test function theta:
///   d/dt sum_i theta(x_i) N_i = coag_term + frag_term,
/// where coag_term is the net coagulation contribution, i.e. the
/// chi_theta double sum minus boundary_term, and boundary_term is the
/// theta(x+y)-weighted rate of pairs leaving through the truncation.
struct WeakFormTerms {
  double coag_term = 0.0;
  double frag_term = 0.0;
  double boundary_term = 0.0;
  /// coag_term + boundary_term: the symmetric chi_theta double sum.
  double chi_term() const noexcept { return coag_term + boundary_term; }
};

WeakFormTerms weak_form_terms(const State& state, const RateEvaluator& rates,
                              const std::function<double(double)>& theta);
WeakFormTerms weak_form_terms(const State& state, const ValidatedSpec& spec,
                              TruncationSpec trunc, const std::function<double(double)>& theta);

}  // namespace coagfrag
